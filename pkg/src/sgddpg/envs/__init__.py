from .pendulum import (PendulumEnv, PendulumParams, StepResult, crossed_bottom, energy,
                       episode_catastrophes, pendulum_reward, pendulum_step,
                       swing_up_controller, wrap_angle)

ENVIRONMENTS = {"pendulum": PendulumEnv}


def make_env(name: str, **kwargs):
    try:
        return ENVIRONMENTS[name](**kwargs)
    except KeyError:
        raise ValueError(f"unknown environment {name!r}; known: {sorted(ENVIRONMENTS)}") from None


__all__ = ["PendulumEnv", "PendulumParams", "StepResult", "crossed_bottom", "energy",
           "episode_catastrophes", "pendulum_reward", "pendulum_step", "swing_up_controller",
           "wrap_angle", "make_env", "ENVIRONMENTS"]
