"""Report figures (matplotlib, Agg backend)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# fixed metadata keeps PNG bytes reproducible
_META = {"Software": None}


def _save(fig, path: Path):
    fig.tight_layout()
    fig.savefig(path, dpi=100, metadata=_META)
    plt.close(fig)


def pass_rates(summary: dict, path: Path):
    rates = summary["rates"]
    labels = sorted(rates)
    vals = [float(rates[c]["rate"]) for c in labels]
    err = np.array([[max(0.0, float(rates[c]["rate"] - rates[c]["ci95"][0])),
                     max(0.0, float(rates[c]["ci95"][1] - rates[c]["rate"]))] for c in labels]).T if labels else None
    fig, ax = plt.subplots(figsize=(4, 3))
    xs = np.arange(len(labels))
    ax.bar(xs, vals, color=["tab:blue", "tab:orange"][:len(labels)])
    if labels:
        # errorbar, not bar(yerr=), handles a single bar without numpy scalar warnings
        ax.errorbar(xs, vals, yerr=err, fmt="none", ecolor="k", capsize=4)
    ax.set_xticks(xs, labels)
    ax.set_ylim(0, 1.05)
    ax.set_xlabel("challenge")
    ax.set_ylabel("pass rate (95% CI)")
    ax.set_title(f"{summary['variant']} / {summary['adversary']} / {summary['profile']}")
    _save(fig, path)


def entropy_histogram(entropies, threshold: float, path: Path):
    fig, ax = plt.subplots(figsize=(5, 3))
    ax.hist(entropies, bins=30, color="tab:green")
    ax.axvline(threshold, color="k", ls="--", label=f"threshold {threshold:.2f}")
    ax.set_xlabel("min-entropy per transcript (bits)")
    ax.set_ylabel("transcripts")
    ax.legend()
    _save(fig, path)


def kernel_histogram(counts, expected: float, low: float, path: Path):
    fig, ax = plt.subplots(figsize=(5, 3))
    ax.hist(counts, bins=30, color="tab:purple")
    ax.axvline(expected, color="k", ls="--", label=f"expected mean {expected:.1f}")
    ax.axvline(low, color="r", ls=":", label=f"low-count threshold {low:.1f}")
    ax.set_xlabel("other binary secrets per instance")
    ax.set_ylabel("instances")
    ax.legend()
    _save(fig, path)


def posterior_histogram(maxima, threshold: float, path: Path):
    fig, ax = plt.subplots(figsize=(5, 3))
    ax.hist(maxima, bins=30, color="tab:red")
    if threshold <= 1:
        ax.axvline(threshold, color="k", ls="--", label=f"threshold {threshold:.3g}")
        ax.legend()
    else:
        ax.set_title(f"threshold {threshold:.3g} lies above 1")
    ax.set_xlabel("max posterior probability of s")
    ax.set_ylabel("instances")
    _save(fig, path)
