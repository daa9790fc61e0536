#!/usr/bin/env python3
"""Freezes reference logits for the tiny checkpoint in tests/data/tiny.

An independent NumPy (float64) GPT-2 forward pass over the container,
read with the `safetensors` package.

    python3 tests/oracle/tiny_forward_golden.py tests/data/tiny tests/data/tiny_forward_golden.json
"""
import json
import sys

import numpy as np
from safetensors.numpy import load_file


def layer_norm(x, g, b, eps):
    mu = x.mean(-1, keepdims=True)
    var = ((x - mu) ** 2).mean(-1, keepdims=True)
    return (x - mu) / np.sqrt(var + eps) * g + b


def gelu(x):
    return 0.5 * x * (1 + np.tanh(np.sqrt(2 / np.pi) * (x + 0.044715 * x ** 3)))


def forward(w, cfg, ids):
    t = {k: v.astype(np.float64) for k, v in w.items()}
    d, nh, eps = cfg["n_embd"], cfg["n_head"], cfg["layer_norm_epsilon"]
    hd = d // nh
    n = len(ids)
    x = t["wte.weight"][ids] + t["wpe.weight"][:n]
    mask = np.triu(np.full((n, n), -np.inf), 1)
    for l in range(cfg["n_layer"]):
        p = f"h.{l}."
        h = layer_norm(x, t[p + "ln_1.weight"], t[p + "ln_1.bias"], eps)
        qkv = h @ t[p + "attn.c_attn.weight"] + t[p + "attn.c_attn.bias"]
        q, k, v = np.split(qkv, 3, axis=-1)
        heads = []
        for i in range(nh):
            s = q[:, i * hd:(i + 1) * hd] @ k[:, i * hd:(i + 1) * hd].T / np.sqrt(hd) + mask
            s = np.exp(s - s.max(-1, keepdims=True))
            s /= s.sum(-1, keepdims=True)
            heads.append(s @ v[:, i * hd:(i + 1) * hd])
        x = x + np.concatenate(heads, -1) @ t[p + "attn.c_proj.weight"] + t[p + "attn.c_proj.bias"]
        h = layer_norm(x, t[p + "ln_2.weight"], t[p + "ln_2.bias"], eps)
        x = x + gelu(h @ t[p + "mlp.c_fc.weight"] + t[p + "mlp.c_fc.bias"]) @ t[p + "mlp.c_proj.weight"] + t[p + "mlp.c_proj.bias"]
    x = layer_norm(x, t["ln_f.weight"], t["ln_f.bias"], eps)
    return x @ t["wte.weight"].T


def main():
    model_dir, out_path = sys.argv[1], sys.argv[2]
    cfg = json.load(open(f"{model_dir}/config.json"))
    w = load_file(f"{model_dir}/model.safetensors")
    cases = [[3, 1, 4], [0], [15, 15, 15, 15], [1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15, 0]]
    rng = np.random.default_rng(2024)
    while len(cases) < 100:
        n = int(rng.integers(1, cfg["n_positions"] + 1))
        cases.append([int(i) for i in rng.integers(0, cfg["vocab_size"], n)])
    out = {"cases": [{"ids": ids, "logits": forward(w, cfg, ids).tolist()} for ids in cases]}
    with open(out_path, "w") as f:
        json.dump(out, f)
        f.write("\n")
    print(f"wrote {len(cases)} cases to {out_path}")


if __name__ == "__main__":
    main()
