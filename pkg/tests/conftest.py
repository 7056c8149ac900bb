"""Shared fixtures for the svi2 test suite"""

import numpy as np
import pytest

from svi2 import generator_fn
from svi2.generator_fn import GeneratorConfig
from svi2.model_fn import BoxLvi, Scenario, TwoStageInstance


def random_box_lvi(rng, k):
    """Box LVI with a well conditioned positive definite symmetric part"""

    G = rng.standard_normal((k, k))
    S = rng.standard_normal((k, k))
    H = G @ G.T / k + np.eye(k) + 0.5 * (S - S.T)
    lo = rng.uniform(-1.5, -0.5, size=k)
    up = lo + rng.uniform(0.5, 2.0, size=k)
    q = rng.uniform(-3.0, 3.0, size=k)
    return BoxLvi(H=H, q=q, lo=lo, up=up)


def decoupled_instance(n_scenarios=3):
    """B = 0 instance whose first stage solves -(2x + h1) in N_[0,3](x) alone"""

    rng = np.random.default_rng(11)
    scenarios = [
        Scenario(
            B=np.zeros((2, 2)),
            L=rng.uniform(-1, 1, size=(2, 2)),
            M=3.0 * np.eye(2),
            h2=rng.uniform(-1, 1, size=2),
            l=-np.ones(2),
            u=np.ones(2),
            weight=1.0 / n_scenarios,
        )
        for _ in range(n_scenarios)
    ]
    return TwoStageInstance(
        n=2,
        m=2,
        A=2.0 * np.eye(2),
        h1=np.array([-1.0, -10.0]),
        a=np.zeros(2),
        b=3.0 * np.ones(2),
        scenarios=scenarios,
    )


@pytest.fixture
def tiny_instance():
    """A = I1, h1 = 0, box [0, 1], one scenario with B = L = 0, M = I1"""

    return TwoStageInstance(
        n=1,
        m=1,
        A=[[1.0]],
        h1=[0.0],
        a=[0.0],
        b=[1.0],
        scenarios=[
            Scenario(B=[[0.0]], L=[[0.0]], M=[[1.0]], h2=[0.0], l=[-1.0], u=[1.0])
        ],
    )


@pytest.fixture(scope="module")
def small_instance():
    """Generated game instance with n = 4, m = 4, N = 4"""

    cfg = GeneratorConfig(n1=2, n2=2, m1=2, m2=2, n_scenarios=4, seed=3)
    return generator_fn.generate(cfg)


@pytest.fixture(scope="module")
def game_instance():
    """Generated game instance at the published dimensions n = 6, m = 10, N = 10"""

    return generator_fn.generate(GeneratorConfig(seed=1))
