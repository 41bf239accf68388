import numpy as np
import pytest

from src.learning.dqn import TrainConfig
from src.learning.train_env import EnvConfig
from src.lgbn.lgbn import LgbnModel
from src.parser.config_parser import parse_config
from src.slo.slo_core import Relation, Slo, cv_service_slos


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def table1_slos():
    return cv_service_slos(800, 33)


@pytest.fixture
def truth_model():
    """The default ground truth as a noise-free fitted model."""
    return LgbnModel(5.0, 6.0, -0.01, 0.0, 0)


@pytest.fixture
def toy_env_config():
    """Five pixel values, cores 1-4, whole device available."""
    return EnvConfig(p_min=100, p_max=500, c_phy=4, core_budget=4, t_pixel=300, t_fps=20,
                     pixel_step=100, cores_step=1)


@pytest.fixture
def toy_slos():
    return [
        Slo("pixel", Relation.GREATER_THAN, 300.0, 0.8),
        Slo("fps", Relation.GREATER_THAN, 20.0, 1.2),
        Slo("cores", Relation.LESS_THAN, 10.0, 0.4),
    ]


@pytest.fixture
def toy_train_config():
    return TrainConfig(learning_rate=0.01, gamma=0.95, epsilon_start=1.0, epsilon_end=0.05,
                       epsilon_decay_steps=3000, batch_size=32, target_sync=100, total_steps=15000,
                       hidden=(32, 32), replay_capacity=5000, seed=7)


@pytest.fixture
def quick_train():
    """Tiny training budget for harness plumbing tests."""
    return {"total_steps": 200, "hidden": [8], "batch_size": 16, "target_sync": 50,
            "epsilon_decay_steps": 100, "replay_capacity": 500}


@pytest.fixture
def small_scenario1(quick_train):
    return parse_config({
        "name": "small1",
        "device": {"c_phy": 10},
        "timing": {"warmup_ticks": 60, "decision_interval": 10},
        "services": [{"id": "cv", "agent": "lsa", "initial": {"pixel": 800, "cores": 4},
                      "slos": [{"variable": "pixel", "relation": ">", "threshold": 800, "weight": 0.8},
                               {"variable": "cores", "relation": "<", "threshold": 10, "weight": 0.4},
                               {"variable": "fps", "relation": ">", "threshold": 33, "weight": 1.2}]}],
        "phases": [{"t_pixel": 800, "t_fps": 33, "max_cores": 9, "duration": 50},
                   {"t_pixel": 1900, "t_fps": 35, "max_cores": 2, "duration": 50}],
        "repetitions": 2,
        "seeds": [1, 2],
        "train": quick_train,
    })


@pytest.fixture
def small_scenario2(quick_train):
    def service(name, cores, t_fps):
        return {"id": name, "agent": "lsa", "initial": {"pixel": 1300, "cores": cores},
                "slos": [{"variable": "pixel", "relation": ">", "threshold": 1300, "weight": 0.8},
                         {"variable": "fps", "relation": ">", "threshold": t_fps, "weight": 1.2}]}

    return parse_config({
        "name": "small2",
        "device": {"c_phy": 8},
        "services": [service("alice", 1, 30), service("bob", 7, 10)],
        "phases": [{"duration": 50}],
        "repetitions": 2,
        "seeds": [1, 2],
        "gso": {"enabled": True, "min_gain": 0.05},
        "train": quick_train,
    })
