"""CSV and JSON artifact schemas shared by the command-line front end.

Every float is printed with 9 significant digits so tolerances can be audited
from the files alone. CSV headers carry `# key=value` comment lines; loss
curves embed the entropy-rate and marginal-entropy baselines of the kernel
they were trained on, which downstream plotting reads back instead of
recomputing.
"""

from __future__ import annotations

import json
from typing import Iterable

from .markov import MarkovKernel, entropy_rate, marginal_entropy, stationary
from .training import RunRecord, SweepRow


def fmt(x) -> str:
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, float):
        return f"{x:.9g}"
    if x is None:
        return ""
    return str(x)


def round9(obj):
    """Round every float in a JSON-like structure to 9 significant digits."""
    if isinstance(obj, float):
        return float(f"{obj:.9g}")
    if isinstance(obj, dict):
        return {k: round9(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [round9(v) for v in obj]
    return obj


def dump_json(data: dict, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fp:
        json.dump(round9(data), fp, indent=2, sort_keys=True)
        fp.write("\n")


def _kernel_header_lines(kernel: MarkovKernel) -> list[str]:
    lines = [f"# kernel={'binary' if kernel.is_binary else 'symmetric'}"]
    lines.append(f"# p={fmt(kernel.p)}")
    if kernel.is_binary:
        lines.append(f"# q={fmt(kernel.q)}")
    lines.append(f"# states={kernel.n_states}")
    lines.append(f"# entropy_rate={fmt(entropy_rate(kernel))}")
    lines.append(f"# marginal_entropy={fmt(marginal_entropy(kernel))}")
    return lines


def write_curve_csv(record: RunRecord, path: str) -> None:
    kernel = record.config.kernel
    lines = ["# schema=loss_curve"]
    lines += _kernel_header_lines(kernel)
    lines.append(f"# tied={fmt(record.config.model.tied)}")
    lines.append(f"# layers={record.config.model.n_layers}")
    lines.append(f"# seed={record.config.seed}")
    lines.append("iteration,test_loss,train_loss")
    for it, test_loss, train_loss in record.loss_curve:
        lines.append(f"{it},{fmt(test_loss)},{fmt(train_loss)}")
    with open(path, "w", encoding="utf-8") as fp:
        fp.write("\n".join(lines) + "\n")


def write_scatter_csv(record: RunRecord, path: str) -> None:
    kernel = record.config.kernel
    if not kernel.is_binary:
        raise ValueError("prediction scatter is defined for binary kernels")
    pi1 = stationary(kernel)[1]
    lines = ["# schema=pred_scatter"]
    lines += _kernel_header_lines(kernel)
    lines.append(f"# tied={fmt(record.config.model.tied)}")
    lines.append(f"# transition_p={fmt(kernel.p)}")
    lines.append(f"# stationary_pi1={fmt(float(pi1))}")
    lines.append("index,current_token,prediction")
    for i, pred in enumerate(record.probe_pred_zero):
        lines.append(f"{i},0,{fmt(pred)}")
    for i, pred in enumerate(record.probe_pred_one):
        lines.append(f"{i},1,{fmt(pred)}")
    with open(path, "w", encoding="utf-8") as fp:
        fp.write("\n".join(lines) + "\n")


def write_sweep_csv(rows: Iterable[SweepRow], path: str) -> None:
    lines = ["# schema=pq_sweep"]
    lines.append("p,q,tied,seed,final_loss,final_pred_zero,final_pred_one,classification")
    for row in rows:
        lines.append(
            ",".join(
                [
                    fmt(row.p),
                    fmt(row.q),
                    fmt(row.tied),
                    str(row.seed),
                    fmt(row.final_loss),
                    fmt(row.final_pred_zero),
                    fmt(row.final_pred_one),
                    row.classification if not row.failed else "failed",
                ]
            )
        )
    with open(path, "w", encoding="utf-8") as fp:
        fp.write("\n".join(lines) + "\n")


def write_spectrum_csv(eigenvalues, path: str) -> None:
    lines = ["# schema=spectrum", "index,eigenvalue"]
    for i, val in enumerate(eigenvalues):
        lines.append(f"{i},{fmt(float(val))}")
    with open(path, "w", encoding="utf-8") as fp:
        fp.write("\n".join(lines) + "\n")
