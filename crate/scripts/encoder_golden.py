"""Reference GLE encodings for the encoder golden test, in plain NumPy."""
import numpy as np

D_IN, H = 8, 4


def fill(name, rows, cols):
    s = sum(name.encode()) % 97 / 10.0
    k = np.arange(rows * cols, dtype=float)
    return (0.3 * np.sin(1.3 * k + s)).reshape(rows, cols)


def sigmoid(z):
    return 1.0 / (1.0 + np.exp(-z))


def lstm(x, p, reverse):
    w_ih, w_hh, b = fill(p + ".w_ih", D_IN, 4 * H), fill(p + ".w_hh", H, 4 * H), fill(p + ".bias", 1, 4 * H)
    n = x.shape[0]
    out = np.zeros((n, H))
    h, c = np.zeros(H), np.zeros(H)
    order = range(n - 1, -1, -1) if reverse else range(n)
    for t in order:
        z = x[t] @ w_ih + b[0] + h @ w_hh
        i, f, g, o = sigmoid(z[:H]), sigmoid(z[H:2 * H]), np.tanh(z[2 * H:3 * H]), sigmoid(z[3 * H:])
        c = f * c + i * g
        h = o * np.tanh(c)
        out[t] = h
    return out


def bilstm(x, p):
    return np.concatenate([lstm(x, p + ".fwd", False), lstm(x, p + ".bwd", True)], axis=1)


def attn(hs, p):
    a = hs @ fill(p + ".w", 1, 2 * H)[0] + fill(p + ".b", 1, 1)[0, 0]
    e = np.exp(a - a.max())
    return (e / e.sum()) @ hs


def main():
    x = np.cos(0.5 * np.arange(3 * D_IN, dtype=float)).reshape(3, D_IN)
    hg = bilstm(x, "enc.global")
    print("global c:", repr(attn(hg, "enc.global.attn").round(12).tolist()))
    hl = bilstm(x, "enc.local.food")
    beta = sigmoid(fill("enc.local.food.beta", 1, 1)[0, 0])
    hm = beta * hl + (1 - beta) * hg
    c = beta * attn(hm, "enc.local.food.attn") + (1 - beta) * attn(hm, "enc.global.attn")
    print("full c:", repr(c.round(12).tolist()))
    print("full H row 1:", repr(hm[1].round(12).tolist()))


if __name__ == "__main__":
    main()
