"""Writes a small latent-dump set in the exporter's on-disk format.

Layout per dump: 48-byte header, little-endian f32 payload, then one mask byte
per token row. Two features carry a consistent markdown-minus-plain lift; the
expected top-2 selection and per-feature statistics go to expected.json.
"""
import json
import struct
from pathlib import Path

import numpy as np

OUT = Path(__file__).resolve().parent / "exporter"
KIND_ACTS = 0x53544341
LAYERS = [3, 5]
M = 8
PAIRS = 6
PLANTED = {3: 2, 5: 6}
EPS = 1e-6


def write_dump(path, layer, values, mask):
    rows, cols = values.shape
    head = b"STEERKT\0" + struct.pack("<IIIIQQII", 1, KIND_ACTS, layer, 0, rows, cols, 1, 1)
    assert len(head) == 48
    body = values.astype("<f4").tobytes() + bytes(mask)
    path.write_bytes(head + body)


def main():
    rng = np.random.default_rng(2024)
    OUT.mkdir(parents=True, exist_ok=True)
    manifest, diffs = [], {l: [] for l in LAYERS}
    for i in range(PAIRS):
        n_tok = int(rng.integers(5, 9))
        mask = [0] + [1] * (n_tok - 2) + [0]  # BOS and EOS are special
        for layer in LAYERS:
            pooled = {}
            for role in ("md", "pl"):
                z = np.maximum(rng.normal(0.0, 0.3, size=(n_tok, M)), 0.0).astype(np.float32)
                if role == "md":
                    z[1:-1, PLANTED[layer]] += np.float32(2.0 + 0.05 * i)
                name = f"pair{i}_L{layer}_{role}.bin"
                write_dump(OUT / name, layer, z, mask)
                manifest.append({"pair_id": f"pair{i}", "role": role, "layer": layer, "file": name})
                sel = z.astype(np.float64)[np.array(mask, dtype=bool)]
                pooled[role] = sel.mean(axis=0)
            diffs[layer].append(pooled["md"] - pooled["pl"])
    d = np.concatenate([np.array(diffs[l]) for l in LAYERS], axis=1)
    mu, var = d.mean(axis=0), d.var(axis=0)

    def mm(v):
        lo, hi = v.min(), v.max()
        return np.zeros_like(v) if hi <= lo else (v - lo) / (hi - lo)

    score = mm(mu) / (mm(var) + EPS)
    cand = [j for j in np.argsort(-score, kind="stable") if mu[j] > 0][:2]
    top = sorted((LAYERS[j // M], int(j % M)) for j in cand)
    (OUT / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    (OUT / "export_info.json").write_text(json.dumps(
        {"latents": True, "m": M, "layers": LAYERS, "pairs": PAIRS, "dtype": "f32",
         "special_positions": "first and last token"}, indent=2) + "\n")
    (OUT / "expected.json").write_text(json.dumps(
        {"k": 2, "epsilon": EPS, "top": [list(t) for t in top],
         "mu": mu.tolist(), "var": var.tolist(), "score": score.tolist()}, indent=2) + "\n")


if __name__ == "__main__":
    main()
