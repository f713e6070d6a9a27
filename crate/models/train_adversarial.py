"""Trains the bundled 4-input / 3-class ReLU classifier.

Inputs are 2x2 grayscale images in [0, 1], flattened row-major. Classes:
0 = top row bright, 1 = left column bright, 2 = main diagonal bright.
Writes adversarial_net.json and adv_input_{0..4}.json next to this file.

    python3 train_adversarial.py
"""

import json
import os

import numpy as np

HERE = os.path.dirname(os.path.abspath(__file__))
PATTERNS = np.array(
    [
        [1.0, 1.0, 0.0, 0.0],
        [1.0, 0.0, 1.0, 0.0],
        [1.0, 0.0, 0.0, 1.0],
    ]
)
HIDDEN = 8


def dataset(rng, n):
    labels = rng.integers(0, 3, n)
    x = PATTERNS[labels] * rng.uniform(0.6, 1.0, (n, 1)) + rng.normal(0, 0.15, (n, 4))
    return np.clip(x, 0.0, 1.0), labels


def main():
    rng = np.random.default_rng(7)
    x, y = dataset(rng, 3000)
    w1 = rng.normal(0, 0.7, (HIDDEN, 4))
    b1 = np.zeros(HIDDEN)
    w2 = rng.normal(0, 0.5, (3, HIDDEN))
    b2 = np.zeros(3)
    onehot = np.eye(3)[y]
    lr = 0.1
    for _ in range(3000):
        h_pre = x @ w1.T + b1
        h = np.maximum(h_pre, 0.0)
        logits = h @ w2.T + b2
        logits -= logits.max(axis=1, keepdims=True)
        p = np.exp(logits)
        p /= p.sum(axis=1, keepdims=True)
        g = (p - onehot) / len(x)
        gw2 = g.T @ h
        gb2 = g.sum(axis=0)
        gh = (g @ w2) * (h_pre > 0)
        gw1 = gh.T @ x
        gb1 = gh.sum(axis=0)
        w1 -= lr * gw1
        b1 -= lr * gb1
        w2 -= lr * gw2
        b2 -= lr * gb2
    test_x, test_y = dataset(rng, 1000)
    pred = (np.maximum(test_x @ w1.T + b1, 0) @ w2.T + b2).argmax(axis=1)
    print("test accuracy", (pred == test_y).mean())

    net = {
        "format_version": 1,
        "input_size": 4,
        "input_bounds": [[0.0, 1.0]] * 4,
        "layers": [
            {"type": "dense", "weights": w1.round(4).tolist(), "bias": b1.round(4).tolist(), "activation": "relu"},
            {"type": "dense", "weights": w2.round(4).tolist(), "bias": b2.round(4).tolist(), "activation": "linear"},
        ],
    }
    layers = ",\n".join("    " + json.dumps(layer) for layer in net["layers"])
    with open(os.path.join(HERE, "adversarial_net.json"), "w") as f:
        f.write('{\n  "format_version": 1,\n  "input_size": 4,\n')
        f.write(f'  "input_bounds": {json.dumps(net["input_bounds"])},\n')
        f.write(f'  "layers": [\n{layers}\n  ]\n}}\n')

    samples = [
        [0.9, 0.8, 0.1, 0.05],
        [0.85, 0.1, 0.9, 0.0],
        [0.95, 0.05, 0.1, 0.9],
        [0.6, 0.5, 0.45, 0.3],
        [0.7, 0.3, 0.35, 0.6],
    ]
    for i, s in enumerate(samples):
        with open(os.path.join(HERE, f"adv_input_{i}.json"), "w") as f:
            json.dump(s, f)
            f.write("\n")


if __name__ == "__main__":
    main()
