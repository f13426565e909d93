"""Train the symmetric agent on SymPair and compare it with value iteration.

Takes about 15 seconds on one core.

    python demos/sympair_vs_oracle.py
"""
import numpy as np

from msppo.envs import oracle
from msppo.envs.sympair import SymPairEnv
from msppo.ppo import TrainerConfig, train
from msppo.tasks import PairTask

task = PairTask()
table = oracle.value_iteration(params=task.params)
print(f"value iteration: {table.iterations} sweeps, residual {table.residual:.1e}")

agent = task.build_agent("ms")
cfg = TrainerConfig(gamma=table.gamma, iterations=100, num_envs=16, steps_per_env=64)
result = train(cfg, task.make_env, agent)

starts = SymPairEnv(1, task.params).sample_initial(64, np.random.default_rng(0))


def policy(s):
    return agent.policy.mean(result.params, s).data


for name, fn in (
    ("oracle", table.greedy_action),
    ("ppo ms", policy),
    ("zero", lambda s: np.zeros((len(s), 2))),
):
    ret = oracle.rollout_return(fn, starts, task.params, table.gamma)
    mirrored = oracle.rollout_return(fn, -starts, task.params, table.gamma)
    print(f"{name:>7}: return {ret.mean():8.4f}, mirrored starts {mirrored.mean():8.4f}")
