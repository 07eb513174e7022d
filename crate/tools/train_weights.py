"""Regenerates the pre-trained weight files under weights/.

This is a minimal stand-in for the full training harness: it trains the
benchmark abstraction networks, the scaled-down Lorenz teacher/student pair
and the Koopman autoencoder, and writes them in the verifier's JSON weight
format. Usage:

    python3 tools/train_weights.py [name ...]

With no arguments every network is (re)trained.
"""

import json
import math
import os
import sys
import time

import numpy as np
import torch
import torch.nn as nn

OUT = os.path.join(os.path.dirname(os.path.abspath(__file__)), "..", "weights")

# Spacecraft constants (normalised units); mirrored in crates/core/src/dynamics/builtin.rs
SC_MU = 1.0
SC_M0 = 1.0
SC_VEX = 2.0


def sc_dyn(x):
    r, th, vr, vt, dm, T, a = [x[:, i] for i in range(7)]
    return torch.stack(
        [
            vr,
            vt / r,
            -SC_MU / r**2 + vt**2 / r + T * torch.cos(a) / (SC_M0 + dm),
            -vr * vt / r + T * torch.sin(a) / (SC_M0 + dm),
            -T / SC_VEX,
        ],
        dim=1,
    )


def quad_map(x, dt=0.02, mu=-0.05, lam=-1.0):
    x1, x2 = x[:, 0], x[:, 1]
    k = lam / (2 * mu - lam)
    return torch.stack(
        [
            x1 * math.exp(mu * dt),
            (x2 + k * x1**2) * math.exp(lam * dt) - k * x1**2 * math.exp(2 * mu * dt),
        ],
        dim=1,
    )


SYSTEMS = {
    "water_tank": (lambda x: torch.stack([1.5 - torch.sqrt(x[:, 0])], 1), [(0.1, 10.0)]),
    "jet_engine": (
        lambda x: torch.stack(
            [-x[:, 1] - 1.5 * x[:, 0] ** 2 - 0.5 * x[:, 0] ** 3 - 0.1, 3 * x[:, 0] - x[:, 1]], 1
        ),
        [(-1.0, 1.0)] * 2,
    ),
    "steam_governor": (
        lambda x: torch.stack(
            [
                x[:, 1],
                0.5 * x[:, 2] ** 2 * torch.sin(2 * x[:, 0]) - torch.sin(x[:, 0]) - 3 * x[:, 1],
                -(torch.cos(x[:, 0]) - 1),
            ],
            1,
        ),
        [(-1.0, 1.0)] * 3,
    ),
    "exponential": (
        lambda x: torch.stack(
            [-torch.sin(torch.exp(x[:, 1] ** 3 + 1)) - x[:, 1] ** 2, -x[:, 0]], 1
        ),
        [(-1.0, 1.0)] * 2,
    ),
    "nl1": (lambda x: torch.stack([x[:, 1], torch.sqrt(x[:, 0])], 1), [(0.0, 1.0), (-1.0, 1.0)]),
    "nl2": (
        lambda x: torch.stack(
            [x[:, 0] ** 2 + x[:, 1], torch.pow(x[:, 0] ** 2, 1.0 / 3.0) - x[:, 0]], 1
        ),
        [(-1.0, 1.0)] * 2,
    ),
    "van_der_pol": (
        lambda x: torch.stack([x[:, 1], 1.0 * (1 - x[:, 0] ** 2) * x[:, 1] - x[:, 0]], 1),
        [(-3.0, 3.0)] * 2,
    ),
    "sine2d": (
        lambda x: torch.stack([torch.sin(0.5 * x[:, 1]), -torch.sin(1.0 * x[:, 0])], 1),
        [(-math.pi, math.pi)] * 2,
    ),
    "nonlinear_oscillator": (
        lambda x: torch.stack([-x[:, 0] - 0.5 * x[:, 0] ** 3 + 0.3 * torch.sin(x[:, 0])], 1),
        [(-3.0, 3.0)],
    ),
    "low_thrust_spacecraft": (
        sc_dyn,
        [(0.9, 1.1), (-math.pi, math.pi), (-0.1, 0.1), (0.9, 1.1), (0.0, 0.1), (0.0, 0.1),
         (-math.pi, math.pi)],
    ),
}

# name -> (system, hidden widths, activation, epsilon target)
JOBS = {
    "water_tank_small": ("water_tank", [12], "relu", 0.097),
    "jet_engine_small": ("jet_engine", [10, 16], "relu", 0.039),
    "steam_governor_small": ("steam_governor", [12], "relu", 0.105),
    "exponential_small": ("exponential", [14, 14], "relu", 0.112),
    "nl1_small": ("nl1", [10], "relu", 0.11),
    "nl2_small": ("nl2", [12, 10], "relu", 0.081),
    "water_tank_large": ("water_tank", [64] * 3, "relu", 0.007),
    "jet_engine_large": ("jet_engine", [64] * 3, "relu", 0.012),
    "steam_governor_large": ("steam_governor", [64] * 3, "relu", 0.06),
    "exponential_large": ("exponential", [64] * 3, "relu", 0.04),
    "nl1_large": ("nl1", [64] * 3, "relu", 0.03),
    "nl2_large": ("nl2", [64] * 3, "relu", 0.02),
    "van_der_pol_large": ("van_der_pol", [64] * 3, "relu", 0.25),
    "sine2d_large": ("sine2d", [64] * 3, "leaky_relu", 0.02),
    "nonlinear_oscillator_large": ("nonlinear_oscillator", [64] * 3, "relu", 0.165),
    "low_thrust_spacecraft_large": ("low_thrust_spacecraft", [64] * 3, "relu", 0.1),
}

LEAKY_SLOPE = 0.01


def mlp(n, widths, m, act):
    layers = []
    d = n
    for w in widths:
        layers.append(nn.Linear(d, w))
        layers.append(nn.ReLU() if act == "relu" else nn.LeakyReLU(LEAKY_SLOPE))
        d = w
    layers.append(nn.Linear(d, m))
    return nn.Sequential(*layers).double()


def export(net_layers, n, m, path, meta=None):
    """net_layers: list of (weight, bias or None, activation)."""
    out = {"version": 1, "n": n, "m": m, "layers": []}
    for w, b, act in net_layers:
        layer = {"weight": w.tolist(), "activation": act}
        if b is not None:
            layer["bias"] = b.tolist()
        if act == "leaky_relu":
            layer["slope"] = LEAKY_SLOPE
        out["layers"].append(layer)
    if meta:
        out["meta"] = meta
    with open(path, "w") as fh:
        json.dump(out, fh)
        fh.write("\n")


def seq_layers(seq, act):
    lins = [l for l in seq if isinstance(l, nn.Linear)]
    res = []
    for i, l in enumerate(lins):
        a = act if i + 1 < len(lins) else "identity"
        res.append((l.weight.detach().numpy(), l.bias.detach().numpy(), a))
    return res


def sample(domain, k, gen):
    lo = torch.tensor([d[0] for d in domain], dtype=torch.float64)
    hi = torch.tensor([d[1] for d in domain], dtype=torch.float64)
    return lo + (hi - lo) * torch.rand(k, len(domain), generator=gen, dtype=torch.float64)


def max_err(net, f, domain, gen, k=1_000_000):
    with torch.no_grad():
        errs = []
        for _ in range(k // 100_000):
            x = sample(domain, 100_000, gen)
            errs.append((f(x) - net(x)).abs().max().item())
        return max(errs)


def train_abstraction(name, iters=50_000, lam=1e-3, seeds=(0, 1, 2, 3), margin=0.8):
    sysname, widths, act, eps = JOBS[name]
    f, domain = SYSTEMS[sysname]
    n = len(domain)
    m = f(sample(domain, 2, torch.Generator().manual_seed(0))).shape[1]
    best = None
    for seed in seeds:
        torch.manual_seed(seed)
        gen = torch.Generator().manual_seed(seed)
        net = mlp(n, widths, m, act)
        opt = torch.optim.AdamW(net.parameters(), lr=1e-3, weight_decay=1e-4)
        sched = torch.optim.lr_scheduler.CosineAnnealingLR(opt, iters, eta_min=1e-6)
        t0 = time.time()
        for it in range(iters):
            x = sample(domain, 4096, gen)
            diff = f(x) - net(x)
            loss = diff.norm(dim=1).mean() + lam * diff.abs().max()
            opt.zero_grad()
            loss.backward()
            torch.nn.utils.clip_grad_norm_(net.parameters(), 1.0)
            opt.step()
            sched.step()
        # minimax polish: shifts weight onto the worst sampled errors
        opt = torch.optim.AdamW(net.parameters(), lr=1e-4, weight_decay=0.0)
        for it in range(iters // 5):
            x = sample(domain, 4096, gen)
            diff = f(x) - net(x)
            loss = diff.norm(dim=1).mean() + 0.5 * diff.abs().max()
            opt.zero_grad()
            loss.backward()
            torch.nn.utils.clip_grad_norm_(net.parameters(), 1.0)
            opt.step()
        err = max_err(net, f, domain, torch.Generator().manual_seed(1234))
        print(f"{name} seed={seed} max_err={err:.5f} eps={eps} ({time.time()-t0:.0f}s)", flush=True)
        if best is None or err < best[0]:
            best = (err, net)
        if err < margin * eps:
            break
    err, net = best
    export(seq_layers(net, act), n, m, os.path.join(OUT, name + ".json"))
    print(f"{name}: exported max_err={err:.5f}", flush=True)


# --- Lorenz teacher / student -------------------------------------------------

LORENZ_DOMAIN = [(-5.0, 5.0), (-5.0, 5.0), (0.0, 10.0)]


def lorenz(x):
    s, r, b = 10.0, 28.0, 8.0 / 3.0
    return torch.stack(
        [s * (x[:, 1] - x[:, 0]), x[:, 0] * (r - x[:, 2]) - x[:, 1], x[:, 0] * x[:, 1] - b * x[:, 2]], 1
    )


def lorenz_step(x, dt=0.02, sub=20):
    h = dt / sub
    for _ in range(sub):
        k1 = lorenz(x)
        k2 = lorenz(x + 0.5 * h * k1)
        k3 = lorenz(x + 0.5 * h * k2)
        k4 = lorenz(x + h * k3)
        x = x + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return x


def train_lorenz(iters=30_000):
    torch.manual_seed(0)
    gen = torch.Generator().manual_seed(0)
    teacher = mlp(3, [64] * 3, 3, "relu")
    opt = torch.optim.AdamW(teacher.parameters(), lr=1e-3, weight_decay=1e-4)
    sched = torch.optim.lr_scheduler.CosineAnnealingLR(opt, iters, eta_min=1e-6)
    for it in range(iters):
        x = sample(LORENZ_DOMAIN, 4096, gen)
        with torch.no_grad():
            y = lorenz_step(x)
        diff = y - teacher(x)
        loss = diff.norm(dim=1).mean() + 1e-3 * diff.abs().max()
        opt.zero_grad()
        loss.backward()
        torch.nn.utils.clip_grad_norm_(teacher.parameters(), 1.0)
        opt.step()
        sched.step()
    export(seq_layers(teacher, "relu"), 3, 3, os.path.join(OUT, "lorenz_teacher.json"))
    student = mlp(3, [16] * 3, 3, "relu")
    opt = torch.optim.AdamW(student.parameters(), lr=1e-3, weight_decay=1e-4)
    sched = torch.optim.lr_scheduler.CosineAnnealingLR(opt, iters, eta_min=1e-6)
    for it in range(iters):
        x = sample(LORENZ_DOMAIN, 4096, gen)
        with torch.no_grad():
            y = teacher(x)
        diff = y - student(x)
        loss = diff.norm(dim=1).mean() + 1e-2 * diff.abs().max()
        opt.zero_grad()
        loss.backward()
        torch.nn.utils.clip_grad_norm_(student.parameters(), 1.0)
        opt.step()
        sched.step()
    export(seq_layers(student, "relu"), 3, 3, os.path.join(OUT, "lorenz_student.json"))
    gap = max_err(student, teacher, LORENZ_DOMAIN, torch.Generator().manual_seed(7))
    print(f"lorenz student max gap {gap:.4f}", flush=True)


# --- Koopman autoencoder ------------------------------------------------------

H = 50
QUAD_DOMAIN = [(-0.5, 0.5), (-0.5, 0.5)]


def train_koopman(epochs=200, n_traj=10_500, batch=125):
    torch.manual_seed(0)
    gen = torch.Generator().manual_seed(0)
    x0 = sample(QUAD_DOMAIN, n_traj, gen)
    traj = [x0]
    for _ in range(H):
        traj.append(quad_map(traj[-1]))
    traj = torch.stack(traj, 1)  # (n_traj, H+1, 2)
    enc = nn.Sequential(nn.Linear(2, 32), nn.ReLU(), nn.Linear(32, 64)).double()
    K = nn.Linear(64, 64, bias=False).double()
    dec = nn.Sequential(nn.Linear(64, 32), nn.ReLU(), nn.Linear(32, 2)).double()
    with torch.no_grad():
        K.weight.copy_(torch.eye(64, dtype=torch.float64))
    params = list(enc.parameters()) + list(K.parameters()) + list(dec.parameters())
    opt = torch.optim.AdamW(params, lr=1e-3, weight_decay=1e-6)
    steps = epochs * (n_traj // batch)
    sched = torch.optim.lr_scheduler.CosineAnnealingLR(opt, steps, eta_min=1e-6)

    def rollout(x):
        z = enc(x)
        outs = [dec(z)]
        for _ in range(H):
            z = K(z)
            outs.append(dec(z))
        return torch.stack(outs, 1)

    for ep in range(epochs):
        perm = torch.randperm(n_traj, generator=gen)
        for i in range(0, n_traj, batch):
            idx = perm[i : i + batch]
            tr = traj[idx]
            pred = rollout(tr[:, 0])
            diff = pred - tr
            loss = (diff**2).mean() + 1e-2 * diff.abs().max()
            opt.zero_grad()
            loss.backward()
            torch.nn.utils.clip_grad_norm_(params, 1.0)
            opt.step()
            sched.step()
        if ep % 20 == 0 or ep == epochs - 1:
            with torch.no_grad():
                v = sample(QUAD_DOMAIN, 2000, torch.Generator().manual_seed(99))
                vt = [v]
                for _ in range(H):
                    vt.append(quad_map(vt[-1]))
                vt = torch.stack(vt, 1)
                d = rollout(v) - vt
                print(f"koopman epoch {ep} val_mse={(d**2).mean().item():.2e} max={d.abs().max().item():.4f}", flush=True)
    meta = {"horizon": H, "dt": 0.02, "lift_dim": 64}
    export(seq_layers(enc, "relu"), 2, 64, os.path.join(OUT, "koopman_encoder.json"), meta)
    export([(K.weight.detach().numpy(), None, "identity")], 64, 64, os.path.join(OUT, "koopman_k.json"), meta)
    export(seq_layers(dec, "relu"), 64, 2, os.path.join(OUT, "koopman_decoder.json"), meta)


def main():
    os.makedirs(OUT, exist_ok=True)
    torch.set_num_threads(1)
    names = sys.argv[1:] or list(JOBS) + ["lorenz", "koopman"]
    for name in names:
        if name == "lorenz":
            train_lorenz()
        elif name == "koopman":
            train_koopman()
        else:
            train_abstraction(name)


if __name__ == "__main__":
    main()
