"""Named experiment presets.

Each preset is a partial INI layout (section -> key -> value text) applied
on top of the built-in defaults and below any config file or command-line
override. They encode the training recipes for the two benchmarks.

``pollu-stiff`` selects QSS species at 2.5e-4 rather than 1e-4: at 1e-4
only nine species qualify and PAN stays in the trained set.
"""

from typing import Dict

EXPERIMENT_PRESETS: Dict[str, Dict[str, Dict[str, str]]] = {
    "rober-stiff": {
        "mechanism": {"source": "builtin:rober"},
        "solver": {"system": "full", "method": "bdf"},
        "qssa": {"threshold": "1e-4", "closure": "closed-form-rober"},
        "network": {"widths": "128,128,128"},
        "training": {
            "mode": "stiff",
            "n_collocation": "2500",
            "t_min": "1e-5",
            "t_max": "1e5",
            "sampling": "log-uniform",
            "batch_size": "128",
            "learning_rate": "1e-3",
            "species_weights": "1,1",
        },
    },
    "rober-regular": {
        "mechanism": {"source": "builtin:rober"},
        "network": {"widths": "128,128,128"},
        "training": {
            "mode": "regular",
            "n_collocation": "2500",
            "t_min": "1e-5",
            "t_max": "1e5",
            "sampling": "log-uniform",
            "batch_size": "128",
            "learning_rate": "1e-3",
            "species_weights": "1,1,1",
        },
    },
    "pollu-stiff": {
        "mechanism": {"source": "builtin:pollu"},
        "qssa": {"threshold": "2.5e-4", "closure": "newton"},
        "network": {"widths": "128,128,128"},
        "training": {
            "mode": "stiff",
            "n_collocation": "2500",
            "t_min": "1e-3",
            "t_max": "60",
            "sampling": "uniform",
            "batch_size": "128",
            "learning_rate": "1e-3",
            "species_weights": "auto",
        },
    },
    "pollu-regular": {
        "mechanism": {"source": "builtin:pollu"},
        "network": {"widths": "128,128,128"},
        "training": {
            "mode": "regular",
            "n_collocation": "2500",
            "t_min": "1e-3",
            "t_max": "60",
            "sampling": "uniform",
            "batch_size": "128",
            "learning_rate": "1e-3",
            "species_weights": "auto",
        },
    },
}


def get_preset(name: str) -> Dict[str, Dict[str, str]]:
    """Return an experiment preset by name.

    Raises:
        ValueError: If preset name is not recognized.
    """
    if name not in EXPERIMENT_PRESETS:
        valid = ", ".join(sorted(EXPERIMENT_PRESETS.keys()))
        raise ValueError(f"Unknown experiment preset '{name}'. Valid presets: {valid}")
    return EXPERIMENT_PRESETS[name]
