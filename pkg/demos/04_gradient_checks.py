"""
Verifying the network kernel with finite differences
====================================================

Every layer (and the composed actor and critic networks) carries an
exact analytic backward pass.  This demo compares each against central
finite differences; linear paths agree to ~1e-10 and the nonlinear
stacks to well under 1e-4.
"""

import numpy as np

from kellybench import nn
from kellybench.ddpg import Actor, Critic, TideEncoder

rng = np.random.default_rng(0)

cases = {
    "linear": (nn.Linear(6, 4, rng), (3, 6)),
    "linear->relu->linear": (nn.Sequential([nn.Linear(6, 8, rng, init="he"),
                                            nn.ReLU(), nn.Linear(8, 2, rng)]), (3, 6)),
    "layer_norm": (nn.LayerNorm(6), (3, 6)),
    "residual_block": (nn.ResidualBlock(6, rng), (3, 6)),
    "tide_encoder": (TideEncoder(30, 8, rng), (3, 30)),
}

print(f"{'network':24s} max relative gradient error")
for name, (net, shape) in cases.items():
    err = nn.grad_check(net, rng.standard_normal(shape))
    print(f"{name:24s} {err:.3e}")


# The composed agent networks need small adapters because the critic takes
# (observation, action) rather than a single input block.
class ActorNet(nn.Layer):
    def __init__(self, actor): self.actor = actor
    def forward(self, x): return self.actor.forward(x)
    def backward(self, g): return self.actor.backward(g)
    def parameters(self): return self.actor.parameters()


class CriticNet(nn.Layer):
    def __init__(self, critic, obs_dim): self.critic, self.obs_dim = critic, obs_dim
    def forward(self, x):
        return self.critic.forward(x[:, :self.obs_dim], x[:, self.obs_dim:])
    def backward(self, g):
        go, ga = self.critic.backward(g)
        return np.concatenate([go, ga], axis=1)
    def parameters(self): return self.critic.parameters()


actor = ActorNet(Actor(30, 8, 1.5, rng))
print(f"{'encoder->actor':24s} {nn.grad_check(actor, rng.standard_normal((3, 30))):.3e}")
critic = CriticNet(Critic(30, 8, 16, rng), obs_dim=30)
x = np.concatenate([rng.standard_normal((3, 30)), rng.uniform(0, 1, (3, 1))], axis=1)
print(f"{'encoder+action->critic':24s} {nn.grad_check(critic, x):.3e}")
