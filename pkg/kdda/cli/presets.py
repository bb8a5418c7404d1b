# kdda/cli/presets.py
"""
Named hyper-parameter sets, one per benchmark family. `alpha` binds both the
domain-confusion and the source cross-entropy weight. Keys given explicitly in
the train section win over the preset.
"""

PRESETS = {
    "office31": {
        "epochs": 400, "tau": 20.0, "alpha": 0.8, "beta_start": 0.1, "beta_end": 0.8,
        "teacher_optimizer": {"learning_rate": 0.001, "weight_decay": 0.0005},
        "student_optimizer": {"learning_rate": 0.001, "weight_decay": 0.0005},
    },
    "imageclef": {
        "epochs": 400, "tau": 20.0, "alpha": 0.8, "beta_start": 0.1, "beta_end": 0.8,
        "teacher_optimizer": {"learning_rate": 0.0001, "weight_decay": 0.0005},
        "student_optimizer": {"learning_rate": 0.001, "weight_decay": 0.0005},
    },
    "digits": {
        "epochs": 100, "tau": 20.0, "alpha": 0.5, "beta_start": 0.1, "beta_end": 0.5, "gamma": 0.5,
        "teacher_optimizer": {"learning_rate": 0.01, "weight_decay": 0.0005},
        "student_optimizer": {"learning_rate": 0.01, "weight_decay": 0.0005},
    },
    "pacs": {
        "epochs": 100, "tau": 20.0, "alpha": 0.5, "beta_start": 0.1, "beta_end": 0.5, "gamma": 0.5,
        "teacher_optimizer": {"learning_rate": 0.01, "weight_decay": 0.0005},
        "student_optimizer": {"learning_rate": 0.01, "weight_decay": 0.0005},
    },
}


def apply_preset(train: dict) -> dict:
    """Returns the train section with its preset (if any) merged underneath."""
    name = train.get("preset")
    if name is None:
        return dict(train)
    if name not in PRESETS:
        raise KeyError(name)
    merged = {k: (dict(v) if isinstance(v, dict) else v) for k, v in PRESETS[name].items()}
    for key, value in train.items():
        if key == "preset":
            continue
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = {**merged[key], **value}
        else:
            merged[key] = value
    merged["preset"] = name
    return merged
