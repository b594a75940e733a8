"""Template: wrap a text-conditional diffusion sampler as a generator adapter.

The harness prompts with the rendered requirement precondition; the
sampler writes images to an output directory and answers with their
paths:

    rbt run ... --generator "exec:python diffusion_generator_adapter.py out/"
"""
import sys
from pathlib import Path

from rbtadapter import serve


def load_pipeline():
    # e.g. diffusers.DiffusionPipeline.from_pretrained(...) with your
    # fine-tuned low-rank adapter weights applied
    raise NotImplementedError("load your fine-tuned pipeline here")


def main():
    out_dir = Path(sys.argv[1])
    out_dir.mkdir(parents=True, exist_ok=True)
    pipeline = load_pipeline()

    def generate(prompt: str, count: int, seed: int):
        paths = []
        for i in range(count):
            image = pipeline(prompt, seed=seed + i)
            path = out_dir / f"{seed}_{i:04d}.png"
            image.save(path)
            paths.append(str(path))
        return paths

    serve("generator", generate)


if __name__ == "__main__":
    main()
