"""Static SVG rendering of sweep curves"""
import logging
from pathlib import Path
from typing import Dict, Sequence

import matplotlib

matplotlib.use('Agg')
import matplotlib.pyplot as plt  # noqa: E402

logger = logging.getLogger(__name__)

# Fixed id salt keeps repeated renders byte-identical
matplotlib.rcParams['svg.hashsalt'] = 'ldlab'


def energy_curves(path, log_eps: Sequence[float], series: Dict[str, Sequence[float]],
                  title: str = 'Scaled energies') -> Path:
    """Plot each series against |ln eps| and save as SVG without date metadata."""
    path = Path(path)
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for label, values in series.items():
        ax.plot(log_eps, values, marker='o', label=label)
    ax.set_xlabel('|ln eps|')
    ax.set_ylabel('energy / |ln eps|^2')
    ax.set_title(title)
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, format='svg', metadata={'Date': None})
    plt.close(fig)
    logger.debug(f"Wrote {path}")
    return path
