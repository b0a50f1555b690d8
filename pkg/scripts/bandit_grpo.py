"""GRPO on a two-action bandit: the policy learns to answer Yes when every label is 1."""
import argparse

from faithcheck.core import LabeledSample
from faithcheck.gateway.mock import LogitBandit
from faithcheck.grpo import GrpoConfig, train_grpo
from faithcheck.rewards import RewardConfig, prediction_only_reward

if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("--steps", type=int, default=50)
    ap.add_argument("--beta", type=float, default=0.001)
    ap.add_argument("--lr", type=float, default=0.1)
    ap.add_argument("--seed", type=int, default=0)
    a = ap.parse_args()

    data = [LabeledSample(f"s{i}", "doc", "claim", 1) for i in range(8)]
    cfg = GrpoConfig(group_size=7, minibatch_size=4, learning_rate=a.lr, kl_coefficient=a.beta,
                     rollout_temperature=1.0, epochs=a.steps, max_steps=a.steps, max_new_tokens=4, seed=a.seed)
    policy, rows = train_grpo(LogitBandit(), LogitBandit(), data, cfg, RewardConfig(), prediction_only_reward)
    for r in rows[:: max(1, len(rows) // 10)]:
        print(f"step {r['step']:3d}  reward {r['mean_reward']:.3f}  kl {r['kl']:.5f}")
    print(f"final P(Yes) = {float(policy.probabilities()[1]):.3f}")
