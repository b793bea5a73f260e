"""JSON schemas of the files written by the command line."""
from __future__ import annotations

_num = {"type": "number"}
_int = {"type": "integer"}


def _obj(props: dict, required=None, extra=False) -> dict:
    return {
        "type": "object",
        "properties": props,
        "required": list(props) if required is None else required,
        "additionalProperties": extra,
    }


PARAMETER_SET = _obj(
    {
        "stage": {"enum": ["DRAG", "PWC"]},
        "amplitude": _num,
        "beta": _num,
        "ssb_frequency": _num,
        "a": {"type": "array", "items": _num},
        "b": {"type": "array", "items": _num},
    },
    required=["stage", "amplitude", "beta", "ssb_frequency"],
)

STAGE_ARTIFACT = _obj(
    {
        "stage": {"enum": ["DRAG", "PWC"]},
        "n_samples": _int,
        "params": PARAMETER_SET,
        "ssb_freq_mhz": _num,
        "cost": _num,
        "best_params": PARAMETER_SET,
        "best_cost": _num,
        "iterations": _int,
    }
)

TRACE_RECORD = _obj(
    {
        "iter": _int,
        "best": _num,
        "mean_cost": _num,
        "sigma": _num,
        "mean": {"type": "array", "items": _num},
        "timings": _obj({"sequence_construction": _int, "setup": _int, "evaluation": _int, "wall": _int}),
    },
    required=["iter", "best", "mean_cost", "sigma", "mean"],
)

SIMULATION_REPORT = _obj(
    {
        "p0": _num,
        "p1": _num,
        "leakage": _num,
        "fidelity_vs": _obj({"X/2": _num, "Y/2": _num}),
        "noiseless": {"type": "boolean"},
    },
    extra={"type": "number"},
)

_fit = _obj(
    {
        "params": {"type": "object", "additionalProperties": _num},
        "stderr": {"type": "object", "additionalProperties": _num},
        "residual_norm": _num,
        "converged": {"type": "boolean"},
        "flags": {"type": "array", "items": {"type": "string"}},
    }
)

RB_FIT = _obj(
    {
        "A": _num,
        "B": _num,
        "lambda": _num,
        "F_avg": _num,
        "stderr": _obj({"A": _num, "B": _num, "lambda": _num, "F_avg": _num}),
        "fit_diagnostics": _fit,
    }
)

LEAKAGE_RESULT = _obj(
    {
        "L1": _num,
        "lambda1": _num,
        "lambda2": _num,
        "F_avg": _num,
        "stderr": _obj({"L1": _num, "lambda1": _num, "lambda2": _num, "F_avg": _num}),
        "fit_diagnostics": _obj({"single": _fit, "double": _fit}),
    }
)

_categories = _obj({"sequence_construction": _num, "setup": _num, "evaluation": _num})

PROFILE_REPORT = _obj(
    {
        "setup_latency_ms": _num,
        "threads": _int,
        "records": {
            "type": "array",
            "items": _obj(
                {
                    "lambda": _int,
                    "iteration_s": _num,
                    "per_evaluation_s": _num,
                    "categories_s": _categories,
                    "per_evaluation_categories_s": _categories,
                    "category_sum_s": _num,
                }
            ),
        },
    }
)

RUN_MANIFEST = _obj(
    {
        "command": {"type": "string"},
        "config": {"type": "object"},
        "outputs": {"type": "object", "additionalProperties": {"type": "string", "pattern": "^[0-9a-f]{64}$"}},
        "run_id": {"type": "string"},
    }
)
