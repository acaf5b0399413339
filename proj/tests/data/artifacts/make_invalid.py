"""Regenerates invalid/*.json: each document breaks exactly one schema rule."""
import copy
import json
import pathlib

BASE = {
    "config": {
        "model": "m", "dataset": "d", "attack": "a",
        "model_params": {}, "dataset_params": {}, "attack_params": {},
    },
    "runs": [{
        "original_prompt": [{"role": "user", "content": "hi"}],
        "steps": [
            {"step": 0, "model_completions": ["x", "y"], "scores": {"judge": {"p": [0.5]}},
             "time_taken": 0.5, "flops": 10, "model_input_tokens": [1, 2]},
            {"step": 1, "model_completions": [], "scores": {},
             "time_taken": 0.5, "flops": 10, "model_input_tokens": [3]},
        ],
        "total_time": 1.0,
    }],
}


def edit(fn):
    doc = copy.deepcopy(BASE)
    fn(doc)
    return doc


def step0(doc):
    return doc["runs"][0]["steps"][0]


CASES = {
    "missing_runs": (lambda d: d.pop("runs"), "runs"),
    "missing_config": (lambda d: d.pop("config"), "config"),
    "empty_model": (lambda d: d["config"].update(model=""), "config.model"),
    "missing_attack_params": (lambda d: d["config"].pop("attack_params"), "config.attack_params"),
    "negative_total_time": (lambda d: d["runs"][0].update(total_time=-1), "runs[0].total_time"),
    "bad_role": (lambda d: d["runs"][0]["original_prompt"][0].update(role="narrator"),
                 "runs[0].original_prompt[0].role"),
    "steps_out_of_order": (lambda d: d["runs"][0]["steps"][1].update(step=0), "runs[0].steps[1].step"),
    "negative_step": (lambda d: d["runs"][0]["steps"].pop() and step0(d).update(step=-2),
                      "runs[0].steps[0].step"),
    "negative_flops": (lambda d: step0(d).update(flops=-5), "runs[0].steps[0].flops"),
    "no_input_encoding": (lambda d: step0(d).pop("model_input_tokens"), "runs[0].steps[0]"),
    "both_encodings": (lambda d: step0(d).update(model_input_embeddings="e.safetensors"), "runs[0].steps[0]"),
    "bad_score_value": (lambda d: step0(d)["scores"]["judge"].update(p=[0.5, "high"]),
                        "runs[0].steps[0].scores.judge.p[1]"),
}

out = pathlib.Path(__file__).parent / "invalid"
out.mkdir(exist_ok=True)
manifest = {}
for name, (fn, path) in CASES.items():
    (out / f"{name}.json").write_text(json.dumps(edit(fn), indent=2) + "\n")
    manifest[f"{name}.json"] = path
(out / "expected_errors.json").write_text(json.dumps(manifest, indent=2) + "\n")
(pathlib.Path(__file__).parent / "base_valid.json").write_text(json.dumps(BASE, indent=2) + "\n")
