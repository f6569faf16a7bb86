"""Toy deterministic actor-critic trained over the wire, plus the
``gridarb-demo`` console entry point.

This is an integration proof, not a research implementation: one actor,
one critic, a flat replay buffer, Gaussian exploration noise.  Everything
the learner knows about the environment — state and action sizes, power
bounds, the horizon — arrives through the hello exchange, so the same
loop drives any config the server can load.  Training divergence is
reported on stderr and in the metrics, never hidden behind an exception.
"""

from __future__ import annotations

import argparse
import copy
import math
import statistics
import sys
from pathlib import Path

import numpy as np
import torch
from torch import nn
from torch.nn import functional as F

from .client import client_reset, client_step, connect
from .errors import AgentError
from .wire import format_float

__all__ = ["main", "train_demo"]

GAMMA = 0.995


class _Actor(nn.Module):
    def __init__(self, state_dim: int, action_dim: int):
        super().__init__()
        self.net = nn.Sequential(
            nn.Linear(state_dim, 64), nn.ReLU(),
            nn.Linear(64, 64), nn.ReLU(),
            nn.Linear(64, action_dim), nn.Tanh())

    def forward(self, state):
        return self.net(state)


class _Critic(nn.Module):
    def __init__(self, state_dim: int, action_dim: int):
        super().__init__()
        self.net = nn.Sequential(
            nn.Linear(state_dim + action_dim, 64), nn.ReLU(),
            nn.Linear(64, 64), nn.ReLU(),
            nn.Linear(64, 1))

    def forward(self, state, action):
        return self.net(torch.cat([state, action], dim=1))


class _Replay:
    """Flat ring buffer over preallocated numpy arrays."""

    def __init__(self, capacity: int, state_dim: int, action_dim: int):
        self.s = np.zeros((capacity, state_dim), dtype=np.float32)
        self.a = np.zeros((capacity, action_dim), dtype=np.float32)
        self.r = np.zeros(capacity, dtype=np.float32)
        self.s2 = np.zeros((capacity, state_dim), dtype=np.float32)
        self.d = np.zeros(capacity, dtype=np.float32)
        self.capacity = capacity
        self.size = 0
        self.head = 0

    def push(self, s, a, r, s2, done) -> None:
        i = self.head
        self.s[i], self.a[i], self.r[i] = s, a, r
        self.s2[i], self.d[i] = s2, float(done)
        self.head = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def __len__(self) -> int:
        return self.size

    def sample(self, batch: int, rng: np.random.Generator):
        idx = rng.integers(0, self.size, size=batch)
        to = lambda arr: torch.from_numpy(arr[idx])  # noqa: E731
        return to(self.s), to(self.a), to(self.r), to(self.s2), to(self.d)


def _soft_update(target: nn.Module, online: nn.Module, tau: float) -> None:
    with torch.no_grad():
        for pt, p in zip(target.parameters(), online.parameters()):
            pt.mul_(1.0 - tau).add_(p, alpha=tau)


def _state_scale(state_dim: int, action_dim: int) -> np.ndarray:
    """Fixed per-dimension scaling for network inputs.

    The state vector lays out net loads (kW, order tens), then price,
    SOCs and the time fraction (all order one); dividing the load block
    by 100 keeps every input in a comparable range without fitting any
    statistics.
    """
    scale = np.ones(state_dim)
    n_load = state_dim - action_dim - 2
    scale[:n_load] = 0.01
    return scale


def _run_random(client, episodes: int, seed: int) -> list:
    rng = np.random.default_rng(seed)
    low, high = client.action_low, client.action_high
    rewards = []
    for ep in range(episodes):
        client_reset(client, {"seed": seed + ep})
        total, done = 0.0, False
        while not done:
            action = rng.uniform(low, high)
            _, r, done, _ = client_step(client, action)
            total += r
        rewards.append(total)
    return rewards


def _run_actor_critic(client, episodes: int, seed: int, gamma: float,
                      warmup_episodes: int, batch_size: int,
                      buffer_size: int, noise_scale: float,
                      noise_decay: float, verbose: bool):
    torch.manual_seed(seed)
    torch.set_num_threads(1)
    rng = np.random.default_rng(seed)

    sdim, adim = client.state_dim, client.action_dim
    centre = (client.action_low + client.action_high) / 2.0
    half = (client.action_high - client.action_low) / 2.0
    scale = _state_scale(sdim, adim)

    actor = _Actor(sdim, adim)
    critic = _Critic(sdim, adim)
    actor_target = copy.deepcopy(actor)
    critic_target = copy.deepcopy(critic)
    actor_opt = torch.optim.Adam(actor.parameters(), lr=5e-4)
    critic_opt = torch.optim.Adam(critic.parameters(), lr=1e-3)
    buffer = _Replay(buffer_size, sdim, adim)

    rewards = []
    diverged = False
    for ep in range(episodes):
        state = client_reset(client, {"seed": seed + ep}) * scale
        sigma = noise_scale * noise_decay ** max(0, ep - warmup_episodes)
        total, done = 0.0, False
        while not done:
            if ep < warmup_episodes:
                unit = rng.uniform(-1.0, 1.0, adim)
            else:
                with torch.no_grad():
                    unit = actor(torch.as_tensor(
                        state, dtype=torch.float32).unsqueeze(0)).numpy()[0]
                unit = np.clip(unit + rng.normal(0.0, sigma, adim),
                               -1.0, 1.0)
            action = centre + half * unit
            next_state, r, done, _ = client_step(client, action)
            next_state = next_state * scale
            buffer.push(state, unit, r, next_state, done)
            total += r
            state = next_state

            if len(buffer) >= batch_size:
                s, a, r_b, s2, d = buffer.sample(batch_size, rng)
                with torch.no_grad():
                    target_q = critic_target(s2, actor_target(s2)).squeeze(1)
                    y = r_b + gamma * (1.0 - d) * target_q
                q = critic(s, a).squeeze(1)
                critic_loss = F.mse_loss(q, y)
                critic_opt.zero_grad()
                critic_loss.backward()
                critic_opt.step()

                actor_loss = -critic(s, actor(s)).mean()
                actor_opt.zero_grad()
                actor_loss.backward()
                actor_opt.step()

                _soft_update(actor_target, actor, tau=0.01)
                _soft_update(critic_target, critic, tau=0.01)
                if not (math.isfinite(critic_loss.item())
                        and math.isfinite(actor_loss.item())):
                    diverged = True
        rewards.append(total)
        if not math.isfinite(total):
            diverged = True
        if verbose and (ep + 1) % 20 == 0:
            tail = rewards[-20:]
            print(f"episode {ep + 1}/{episodes}  "
                  f"mean(last {len(tail)}) = {statistics.fmean(tail):.3f}",
                  file=sys.stderr)
    return rewards, diverged


def train_demo(endpoint, episodes: int, seed: int,
               output="metrics.csv", *, gamma: float = GAMMA,
               policy: str = "actor-critic", warmup_episodes: int = 10,
               batch_size: int = 128, buffer_size: int = 50_000,
               noise_scale: float = 0.4, noise_decay: float = 0.99,
               verbose: bool = False) -> Path:
    """Run a training (or random-policy) session and write per-episode
    rewards as a two-column CSV; returns the path written.

    The run is deterministic end-to-end for a fixed ``seed`` against a
    deterministic server: day selection, exploration noise, torch
    initialization and replay sampling all derive from it.
    """
    if policy not in ("actor-critic", "random"):
        raise ValueError(f"policy must be 'actor-critic' or 'random', "
                         f"got {policy!r}")
    client = connect(endpoint)
    try:
        if policy == "random":
            rewards, diverged = _run_random(client, episodes, seed), False
        else:
            rewards, diverged = _run_actor_critic(
                client, episodes, seed, gamma, warmup_episodes, batch_size,
                buffer_size, noise_scale, noise_decay, verbose)
    finally:
        client.close()

    path = Path(output)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("episode,reward\n")
        for i, r in enumerate(rewards):
            text = format_float(r) if math.isfinite(r) else repr(float(r))
            fh.write(f"{i},{text}\n")
    if diverged:
        print("WARNING: training diverged (non-finite loss or reward); "
              "the metrics file records what happened", file=sys.stderr)
    return path


def _read_rewards(path: Path) -> list:
    lines = path.read_text(encoding="utf-8").splitlines()
    return [float(line.split(",")[1]) for line in lines[1:]]


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gridarb-demo",
        description="Train a toy actor-critic against a dispatch server")
    parser.add_argument("--config", default=None,
                        help="server config JSON for the spawned server "
                             "(ignored with --port)")
    parser.add_argument("--port", type=int, default=None,
                        help="connect to a server already listening on "
                             "127.0.0.1:PORT instead of spawning one")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--episodes", type=int, default=200)
    parser.add_argument("--policy", choices=("actor-critic", "random"),
                        default="actor-critic")
    parser.add_argument("--gamma", type=float, default=GAMMA)
    parser.add_argument("--output", default="metrics.csv")
    parser.add_argument("--baseline-episodes", type=int, default=100,
                        help="random-policy episodes for the comparison "
                             "baseline (0 disables)")
    parser.add_argument("--quiet", action="store_true",
                        help="suppress per-episode progress on stderr")
    return parser


def _endpoint(args):
    if args.port is not None:
        return ("127.0.0.1", args.port)
    argv = [sys.executable, "-m", "gridarb.cli", "serve",
            "--seed", str(args.seed)]
    if args.config is not None:
        argv += ["--config", args.config]
    return argv


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    endpoint = _endpoint(args)
    try:
        path = train_demo(endpoint, args.episodes, args.seed, args.output,
                          gamma=args.gamma, policy=args.policy,
                          verbose=not args.quiet)
        rewards = _read_rewards(path)
        print(f"wrote {path} ({len(rewards)} episodes)")
        if not rewards:
            return 0
        tail = rewards[-min(20, len(rewards)):]
        trained_mean = statistics.fmean(tail)
        print(f"mean reward over the last {len(tail)} episodes: "
              f"{trained_mean:.3f}")
        if args.baseline_episodes > 0 and args.policy != "random":
            base_path = path.with_name(path.stem + "_baseline" + path.suffix)
            train_demo(endpoint, args.baseline_episodes, args.seed,
                       base_path, policy="random")
            baseline = _read_rewards(base_path)
            baseline_mean = statistics.fmean(baseline)
            print(f"random-policy mean reward ({len(baseline)} episodes): "
                  f"{baseline_mean:.3f}")
            if trained_mean > baseline_mean:
                print(f"trained policy beats the random baseline by "
                      f"{trained_mean - baseline_mean:.3f}")
            else:
                print("WARNING: trained policy did not beat the random "
                      "baseline", file=sys.stderr)
    except (AgentError, OSError, ValueError) as exc:
        print(f"gridarb-demo: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
