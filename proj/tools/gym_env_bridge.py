#!/usr/bin/env python3
"""Serve a Gymnasium environment over the line-delimited JSON protocol used by
`edtd7 train --env-cmd`.

    edtd7 train --dataset halfcheetah-medium-v2.hdf5 --env halfcheetah-medium-v2 \
        --env-cmd "python3 tools/gym_env_bridge.py HalfCheetah-v4"

Actions arrive in [-1, 1] and are rescaled to the environment's bounds.
"""
import json
import sys

import gymnasium as gym
import numpy as np


def main():
    env = gym.make(sys.argv[1])
    low, high = env.action_space.low, env.action_space.high

    def reply(obj):
        sys.stdout.write(json.dumps(obj) + "\n")
        sys.stdout.flush()

    for line in sys.stdin:
        msg = json.loads(line)
        cmd = msg["cmd"]
        if cmd == "spec":
            reply({"state_dim": int(np.prod(env.observation_space.shape)),
                   "action_dim": int(np.prod(env.action_space.shape))})
        elif cmd == "reset":
            obs, _ = env.reset(seed=int(msg.get("seed", 0)))
            reply({"state": np.asarray(obs, dtype=float).ravel().tolist()})
        elif cmd == "step":
            a = np.clip(np.asarray(msg["action"], dtype=float), -1.0, 1.0)
            a = low + (a + 1.0) * 0.5 * (high - low)
            obs, reward, terminated, truncated, _ = env.step(a)
            reply({"state": np.asarray(obs, dtype=float).ravel().tolist(),
                   "reward": float(reward), "done": bool(terminated or truncated)})
        elif cmd == "close":
            break
        else:
            reply({"error": "unknown command " + cmd})
    env.close()


if __name__ == "__main__":
    main()
