#!/usr/bin/env python3
"""Reference greedy continuation of the published GPT-2 small checkpoint.

Runs Hugging Face transformers over a local snapshot of "gpt2" (a directory
holding model.safetensors, config.json, vocab.json and merges.txt) and writes
DIR/greedy_golden.json, which the acceptance suite compares against when
TRACELM_GPT2_DIR=DIR is set.

    python3 tools/reference/gpt2_greedy_golden.py /path/to/gpt2
"""
import json
import sys

import torch
from transformers import GPT2LMHeadModel, GPT2TokenizerFast

PROMPT = "The history of the printing press begins in"
NEW_TOKENS = 20


def main():
    model_dir = sys.argv[1]
    tok = GPT2TokenizerFast.from_pretrained(model_dir)
    model = GPT2LMHeadModel.from_pretrained(model_dir, torch_dtype=torch.float32).eval()
    ids = tok(PROMPT)["input_ids"]
    x = torch.tensor([ids])
    with torch.no_grad():
        out = model.generate(x, attention_mask=torch.ones_like(x), max_new_tokens=NEW_TOKENS, do_sample=False,
                             num_beams=1, pad_token_id=tok.eos_token_id)
    continuation = out[0, len(ids):].tolist()
    golden = {"reference": "transformers " + __import__("transformers").__version__, "prompt": PROMPT,
              "prompt_ids": ids, "continuation": continuation}
    with open(f"{model_dir}/greedy_golden.json", "w") as f:
        json.dump(golden, f, indent=1)
        f.write("\n")
    print(tok.decode(out[0]))


if __name__ == "__main__":
    main()
