from .model import (PolicyConfig, PolicyParams, PolicyInputs, N_ACTIONS,
                    policy_forward, ego_stack, cost_targets, cost_target_vector,
                    nav_loss, action_probabilities, select_action,
                    save_policy, load_policy)

__all__ = [
    "PolicyConfig", "PolicyParams", "PolicyInputs", "N_ACTIONS",
    "policy_forward", "ego_stack", "cost_targets", "cost_target_vector",
    "nav_loss", "action_probabilities", "select_action",
    "save_policy", "load_policy",
]
