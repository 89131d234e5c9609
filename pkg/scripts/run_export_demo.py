#!/usr/bin/env python3
"""Export a tiny raw manifest with teco-export, then train on the
resulting bundle with the main package.  Shows the two packages talking
only through the bundle and knowledge-store file formats.
"""
import json
import os
import subprocess
import sys
import tempfile

RAW = {
    "class_names": ["thank", "complain"],
    "binary_map": [1, 0],
    "utterances": [
        {"id": "u1", "text": "So thank you all so much for my gifts .",
         "label": 0, "split": "train",
         "generated": {"xreact": "grateful", "xwant": "to say thanks"}},
        {"id": "u2", "text": "I'm not really that happy with you either .",
         "label": 1, "split": "train",
         "generated": {"xreact": "sad", "xwant": "to be left alone"}},
        {"id": "u3", "text": "Stop interrupting me every single time .",
         "label": 1, "split": "train"},
        {"id": "u4", "text": "Let's plan something fun for the weekend .",
         "label": 0, "split": "valid",
         "generated": {"xreact": "excited", "xwant": "to have a good time"}},
        {"id": "u5", "text": "Thanks a lot , that means a lot to me .",
         "label": 0, "split": "test",
         "generated": {"xreact": "happy", "xwant": "to celebrate"}},
    ],
}

CORPUS = "\n".join([
    "someone thanks everyone for the gifts\thappy\tto celebrate",
    "someone is not happy with you\tsad\tto be left alone",
    "someone keeps interrupting the meeting\tfrustrated\tto scold someone",
    "someone plans a trip with friends\texcited\tto have a good time",
]) + "\n"


def run(*cmd):
    print("+", " ".join(cmd))
    subprocess.run(cmd, check=True)


def main():
    out = sys.argv[1] if len(sys.argv) > 1 else tempfile.mkdtemp(
        prefix="teco_export_demo_")
    os.makedirs(out, exist_ok=True)
    raw = os.path.join(out, "raw.json")
    corpus = os.path.join(out, "corpus.tsv")
    with open(raw, "w") as fh:
        json.dump(RAW, fh, indent=1)
    with open(corpus, "w") as fh:
        fh.write(CORPUS)

    bundle = os.path.join(out, "bundle")
    run("teco-export", "export", "--raw", raw, "--corpus", corpus,
        "--out", bundle, "--knowledge-out", os.path.join(out, "store.tsv"),
        "--dim", "16", "--dim-v", "8", "--dim-a", "8",
        "--len-text", "6", "--len-vision", "5", "--len-audio", "5",
        "--len-relation", "6")
    run("teco", "train", "--bundle", bundle,
        "--out", os.path.join(out, "train"), "--seed", "0",
        "--set", "train.max_epochs=3", "--set", "train.patience=3",
        "--set", "train.batch_size=2", "--set", "train.eval_batch_size=2")
    print(f"demo outputs under {out}")


if __name__ == "__main__":
    main()
