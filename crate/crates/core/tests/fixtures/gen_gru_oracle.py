"""Reference outputs and gradients for the sequence regressor, via torch autograd.

Layers are stacked by hand from single-layer torch GRUs so explicit dropout
masks can be applied between them. Run from this directory.
"""
import json

import torch

torch.manual_seed(1234)
torch.set_default_dtype(torch.float64)
EMBED = 5

CASES = [
    dict(fc_out=2, num_layers=1, bidirectional=False, dropout=0.0),
    dict(fc_out=2, num_layers=2, bidirectional=True, dropout=0.0),
    dict(fc_out=4, num_layers=2, bidirectional=False, dropout=0.5),
    dict(fc_out=6, num_layers=3, bidirectional=True, dropout=0.2),
]


def build(cfg):
    o = cfg["fc_out"]
    h = (o + 2) // 2
    d = 2 if cfg["bidirectional"] else 1
    fc1 = torch.nn.Linear(EMBED, o)
    grus = []
    for layer in range(cfg["num_layers"]):
        inp = o + 2 if layer == 0 else d * h
        grus.append(torch.nn.GRU(inp, h, 1, batch_first=True, bidirectional=cfg["bidirectional"]))
    fc2 = torch.nn.Linear(d * h, 1)
    named = [("fc1.weight", fc1.weight), ("fc1.bias", fc1.bias)]
    for layer, g in enumerate(grus):
        for sfx in [""] + (["_reverse"] if cfg["bidirectional"] else []):
            for kind in ["weight_ih", "weight_hh", "bias_ih", "bias_hh"]:
                named.append((f"gru.{kind}_l{layer}{sfx}", getattr(g, f"{kind}_l0{sfx}")))
    named += [("fc2.weight", fc2.weight), ("fc2.bias", fc2.bias)]
    with torch.no_grad():
        for _, p in named:
            p.uniform_(-0.8, 0.8)
    return fc1, grus, fc2, named, h, d


def run(cfg, fc1, grus, fc2, h, d, seq, masks):
    e = torch.tensor([s["embedding"] for s in seq])
    extra = torch.tensor([[s["emt"], 1.0 if s["is_author"] else 0.0] for s in seq])
    x = torch.cat([fc1(e), extra], dim=1).unsqueeze(0)
    for layer, g in enumerate(grus):
        out, _ = g(x)
        if layer + 1 < len(grus) and masks is not None:
            out = out * torch.tensor(masks[layer]).unsqueeze(0)
        x = out
    L = len(seq)
    feat = x[0, L - 1, :h]
    if d == 2:
        feat = torch.cat([feat, x[0, 0, h:]])
    return fc2(feat)[0]


def main():
    rows = []
    for cfg in CASES:
        fc1, grus, fc2, named, h, d = build(cfg)
        for L in [1, 2, 5]:
            seq = [
                dict(
                    embedding=[float(v) for v in torch.empty(EMBED).uniform_(-1, 1).float()],
                    emt=round(float(torch.empty(1).uniform_(-1, 1)), 6),
                    is_author=bool(i % 2 == 0),
                )
                for i in range(L)
            ]
            masks = None
            if cfg["dropout"] > 0:
                keep = 1 - cfg["dropout"]
                masks = [
                    [[(1 / keep) if torch.rand(1).item() < keep else 0.0 for _ in range(d * h)] for _ in range(L)]
                    for _ in range(cfg["num_layers"] - 1)
                ]
            dy = round(float(torch.empty(1).uniform_(-2, 2)), 6)
            for _, p in named:
                p.grad = None
            y = run(cfg, fc1, grus, fc2, h, d, seq, masks)
            (y * dy).backward()
            rows.append(
                dict(
                    config=dict(cfg, seq_cap=64, embed_dim=EMBED),
                    params={n: p.detach().flatten().tolist() for n, p in named},
                    steps=seq,
                    masks=masks,
                    dy=dy,
                    output=y.item(),
                    grads={n: p.grad.flatten().tolist() for n, p in named},
                )
            )
    with open("gru_oracle.json", "w") as f:
        json.dump(rows, f)


if __name__ == "__main__":
    main()
