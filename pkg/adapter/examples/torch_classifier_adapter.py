"""Template: wrap a torch image classifier as a MUT adapter.

Fill in load_model() and the class-name mapping for your checkpoint,
then point the harness at it:

    rbt run ... --mut "exec:python torch_classifier_adapter.py weights.pt"
"""
import sys

from rbtadapter import serve
from rbtadapter.stubs import class_output


def load_model(checkpoint_path):
    import torch
    import torchvision

    model = torchvision.models.resnet101()
    model.load_state_dict(torch.load(checkpoint_path, map_location="cpu"))
    model.eval()
    return model


def main():
    checkpoint = sys.argv[1]
    model = load_model(checkpoint)

    def infer(input_ref: str) -> dict:
        import torch
        from PIL import Image
        from torchvision import transforms

        tensor = transforms.ToTensor()(Image.open(input_ref).convert("RGB"))
        with torch.no_grad():
            logits = model(tensor.unsqueeze(0))
        # map the argmax index to your label vocabulary here
        return class_output(str(int(logits.argmax())))

    serve("mut", infer)


if __name__ == "__main__":
    main()
