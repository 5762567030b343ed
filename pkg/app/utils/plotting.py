"""
Learning-curve plots from a training metrics log.
"""
import json
from pathlib import Path
from typing import Dict, List, Union

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def read_metrics(path: Union[str, Path]) -> List[Dict[str, object]]:
    """One dict per non-empty line of a JSONL metrics log."""
    records = []
    with open(path, "r", encoding="utf-8") as f:
        for number, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}, line {number}: invalid JSON ({exc.msg})") from None
    return records


def plot_learning_curve(records: List[Dict[str, object]], output: Union[str, Path], title: str = "Training") -> Path:
    """Proof rate and mean return per iteration, stacked, saved as PNG."""
    if not records:
        raise ValueError("no metrics to plot")
    iterations = [r["iteration"] for r in records]
    fig, (top, bottom) = plt.subplots(2, 1, sharex=True, figsize=(8, 6))
    top.plot(iterations, [r["proof_rate"] for r in records], color="tab:blue")
    top.set_ylabel("proof rate")
    top.set_ylim(0.0, 1.0)
    top.grid(alpha=0.3)
    bottom.plot(iterations, [r["mean_return"] for r in records], color="tab:orange")
    bottom.set_ylabel("mean return")
    bottom.set_xlabel("iteration")
    bottom.grid(alpha=0.3)
    fig.suptitle(title)
    fig.tight_layout()
    output = Path(output)
    fig.savefig(output, format="png")
    plt.close(fig)
    return output
