#!/usr/bin/env python3
"""Convert public MGT detection datasets to the toolkit's JSONL schema.

Output lines look like:
    {"id": ..., "text": ..., "label": "human"|"machine",
     "domain": ...?, "generator": ...?}

Supported inputs:
    grover    Grover realnews generations (one JSON object per line with
              "article" and "label" fields)
    gpt2      OpenAI gpt-2-output-dataset pairs: one human file (webtext.*)
              and one model file (e.g. xl-1542M.*), each with "text" lines
    coco      CoCo GPT-3.5 news splits: JSON/JSONL with "text" and a 0/1
              or human/machine "label"
    hc3       HC3 question/answer lines with "human_answers" and
              "chatgpt_answers" arrays
"""

import argparse
import json
import sys


def iter_json_lines(path):
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            try:
                yield lineno, json.loads(line)
            except json.JSONDecodeError as e:
                sys.exit(f"{path}:{lineno}: bad JSON: {e}")


def emit(out, rec):
    if not rec["text"] or not rec["text"].strip():
        return 0
    rec = {k: v for k, v in rec.items() if v is not None}
    out.write(json.dumps(rec, ensure_ascii=False) + "\n")
    return 1


def convert_grover(args, out):
    n = 0
    for lineno, obj in iter_json_lines(args.input):
        label = str(obj.get("label", "")).lower()
        if label not in ("human", "machine"):
            continue  # grover files also carry unlabeled split rows
        n += emit(out, {
            "id": f"grover:{lineno}",
            "text": obj.get("article", obj.get("text", "")),
            "label": label,
            "generator": "grover-mega" if label == "machine" else None,
        })
    return n


def convert_gpt2(args, out):
    n = 0
    for which, path, label in (("human", args.human, "human"),
                               ("model", args.model, "machine")):
        for lineno, obj in iter_json_lines(path):
            n += emit(out, {
                "id": f"gpt2-{which}:{lineno}",
                "text": obj.get("text", ""),
                "label": label,
                "generator": "gpt2-xl" if label == "machine" else None,
            })
    return n


def convert_coco(args, out):
    with open(args.input, encoding="utf-8") as f:
        head = f.read(1).strip()
    rows = []
    if head == "[":
        with open(args.input, encoding="utf-8") as f:
            rows = [(i + 1, obj) for i, obj in enumerate(json.load(f))]
    else:
        rows = list(iter_json_lines(args.input))
    n = 0
    for lineno, obj in rows:
        raw = obj.get("label")
        if raw in (0, "0", "human"):
            label = "human"
        elif raw in (1, "1", "machine"):
            label = "machine"
        else:
            continue
        n += emit(out, {
            "id": f"gpt3.5:{lineno}",
            "text": obj.get("text", obj.get("article", "")),
            "label": label,
            "generator": "text-davinci-003" if label == "machine" else None,
        })
    return n


def convert_hc3(args, out):
    n = 0
    for lineno, obj in iter_json_lines(args.input):
        domain = obj.get("source")
        for k, answer in enumerate(obj.get("human_answers") or []):
            n += emit(out, {
                "id": f"hc3:{lineno}:h{k}",
                "text": answer,
                "label": "human",
                "domain": domain,
            })
        for k, answer in enumerate(obj.get("chatgpt_answers") or []):
            n += emit(out, {
                "id": f"hc3:{lineno}:m{k}",
                "text": answer,
                "label": "machine",
                "domain": domain,
                "generator": "chatgpt",
            })
    return n


def main():
    parser = argparse.ArgumentParser(description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--out", required=True, help="output JSONL path")
    sub = parser.add_subparsers(dest="format", required=True)

    p = sub.add_parser("grover")
    p.add_argument("input")
    p.set_defaults(fn=convert_grover)

    p = sub.add_parser("gpt2")
    p.add_argument("--human", required=True, help="webtext.*.jsonl")
    p.add_argument("--model", required=True, help="e.g. xl-1542M.*.jsonl")
    p.set_defaults(fn=convert_gpt2)

    p = sub.add_parser("coco")
    p.add_argument("input")
    p.set_defaults(fn=convert_coco)

    p = sub.add_parser("hc3")
    p.add_argument("input")
    p.set_defaults(fn=convert_hc3)

    args = parser.parse_args()
    with open(args.out, "w", encoding="utf-8") as out:
        n = args.fn(args, out)
    print(f"wrote {n} records to {args.out}")


if __name__ == "__main__":
    main()
