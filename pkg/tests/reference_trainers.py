"""Hand-written reference loops used as oracles for the trainer."""
import numpy as np

from supercm.data import sample_batch
from supercm.trainer import ModelConfig, SuperCMModel, make_rngs


def pure_ce_trajectory(ds, labeled_idx, unlabeled_idx, config, model_cfg=None):
    """Supervised cross-entropy training of backbone + linear softmax head.

    Shares initialisation and the batch stream with the real trainer (same
    seed consumption), but does its own forward, backward and Adam. Returns
    the flat parameter list after every iteration.
    """
    model_cfg = model_cfg or ModelConfig()
    init_rng, rng = make_rngs(config.seed)
    init = SuperCMModel.init(ds.features.shape[1], ds.n_classes, model_cfg, init_rng)
    ws = [w.copy() for w in init.mlp.weights] + [init.cm.weights.copy()]
    bs = [b.copy() for b in init.mlp.biases] + [init.cm.bias.copy()]
    relu = model_cfg.activation == "relu"
    layout = [p for pair in zip(ws, bs) for p in pair]
    m = [np.zeros_like(p) for p in layout]
    v = [np.zeros_like(p) for p in layout]
    b1, b2, eps = 0.9, 0.999, 1e-8
    n_u = config.n_u if len(unlabeled_idx) else 0
    history = []

    for it in range(1, config.iterations + 1):
        lr = config.lr if it <= config.decay_step else config.lr * config.decay_factor
        batch = sample_batch(ds, labeled_idx, unlabeled_idx, config.n_l, n_u, config.augment_sd, rng)
        x, y = batch.labeled, batch.labels
        n = x.shape[0]

        acts, pres = [x], []
        h = x
        for i in range(len(ws)):
            a = h @ ws[i] + bs[i]
            if i < len(ws) - 2:
                pres.append(a)
                h = np.maximum(a, 0.0) if relu else np.tanh(a)
            else:
                h = a
            acts.append(h)
        z = acts[-1]
        e = np.exp(z - z.max(axis=1, keepdims=True))
        p = e / e.sum(axis=1, keepdims=True)

        g = p.copy()
        g[np.arange(n), y] -= 1.0
        g = g / n
        gw = [None] * len(ws)
        gb = [None] * len(ws)
        # head
        gw[-1] = acts[-2].T @ g
        gb[-1] = g.sum(axis=0)
        g = g @ ws[-1].T
        # backbone
        for i in range(len(ws) - 2, -1, -1):
            gw[i] = acts[i].T @ g
            gb[i] = g.sum(axis=0)
            g = g @ ws[i].T
            if i > 0:
                g = g * (pres[i - 1] > 0) if relu else g * (1.0 - acts[i] * acts[i])

        params, grads = [], []
        for i in range(len(ws) - 1):
            params += [ws[i], bs[i]]
            grads += [gw[i], gb[i]]
        params += [ws[-1], bs[-1]]
        grads += [gw[-1], gb[-1]]
        c1, c2 = 1.0 - b1**it, 1.0 - b2**it
        for j, (pp, gg) in enumerate(zip(params, grads)):
            m[j] *= b1
            m[j] += (1.0 - b1) * gg
            v[j] *= b2
            v[j] += (1.0 - b2) * (gg * gg)
            pp -= lr * (m[j] / c1) / (np.sqrt(v[j] / c2) + eps)
        history.append([pp.copy() for pp in params])
    return history
