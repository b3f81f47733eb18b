"""
Quality Report

Distribution distances between real and synthetic embeddings, the hull
overlap of their 2-D projections, and the comparison of guided samples
against an unconditional baseline.
"""

import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

import matplotlib
matplotlib.use('Agg')
# Fixed salt makes SVG element ids reproducible.
matplotlib.rcParams['svg.hashsalt'] = 'csg-pipeline'
import matplotlib.pyplot as plt
import numpy as np

from data.exporter import DataExporter
from .contour import contour_overlap, convex_hull, project_pca
from .distribution import CovarianceError, frechet_distance, marginal_kl, marginal_ks

logger = logging.getLogger(__name__)

# Set when the covariance guard rejects a sample set; frechet is then None.
FRECHET_SKIPPED = 'frechet_skipped'


@dataclass
class QualityReport:
    kst: float
    kld: float
    frechet: Optional[float]
    contour: Dict[str, float]
    label: str = 'synthetic'
    n_real: int = 0
    n_synth: int = 0
    flags: List[str] = field(default_factory=list)

    def __post_init__(self):
        if not 0.0 <= self.kst <= 1.0:
            raise ValueError(f"kst={self.kst} outside [0,1]")
        if self.kld < 0.0 or (self.frechet is not None and self.frechet < -1e-8):
            raise ValueError(f"negative divergence (kld={self.kld}, frechet={self.frechet})")

    def to_dict(self) -> Dict:
        return asdict(self)

    def row(self) -> Dict:
        """Flat row for the CSV table."""
        row = {'label': self.label, 'kst': self.kst, 'kld': self.kld, 'frechet': self.frechet,
               'n_real': self.n_real, 'n_synth': self.n_synth, 'flags': ';'.join(self.flags)}
        row.update({f"contour_{k}": v for k, v in self.contour.items()})
        return row


def quality_report(real: np.ndarray, synth: np.ndarray, label: str = 'synthetic',
                   bins: int = 32, grid: int = 512,
                   min_samples_ratio: float = 0.25) -> QualityReport:
    """
    Score synthetic embeddings against real ones.

    Args:
        real: (n, d) embeddings of held-out real images
        synth: (m, d) embeddings of generated images
        label: Name of the synthetic arm
        bins: Histogram bins for KL
        grid: Hull raster resolution
        min_samples_ratio: Frechet covariance guard; below it frechet is None and flagged
    """
    flags = []
    try:
        frechet = frechet_distance(real, synth, min_samples_ratio)
    except CovarianceError as e:
        logger.warning("%s: frechet skipped: %s", label, e)
        frechet = None
        flags.append(FRECHET_SKIPPED)
    report = QualityReport(
        kst=marginal_ks(real, synth),
        kld=marginal_kl(real, synth, bins),
        frechet=frechet,
        contour=contour_overlap(real, synth, grid),
        label=label,
        n_real=int(np.shape(real)[0]),
        n_synth=int(np.shape(synth)[0]),
        flags=flags,
    )
    logger.info("%s: frechet %s kst %.4f kld %.4f hull iou %.3f", label,
                report.frechet, report.kst, report.kld, report.contour['iou'],
                extra={'arm': label, 'frechet': report.frechet})
    return report


def compare_reports(guided: QualityReport, baseline: QualityReport) -> Dict:
    """
    Which of the three distances favour the guided samples.

    A skipped Frechet distance compares as None and does not count as agreeing.
    """
    frechet = None
    if guided.frechet is not None and baseline.frechet is not None:
        frechet = guided.frechet < baseline.frechet
    lower = {
        'frechet': frechet,
        'kst': guided.kst < baseline.kst,
        'kld': guided.kld < baseline.kld,
    }
    return {
        'lower_is_better': lower,
        'frechet_improved': lower['frechet'],
        'metrics_agreeing': sum(1 for v in lower.values() if v),
    }


def write_reports(reports: List[QualityReport], out_dir: Path, metadata: Optional[Dict] = None,
                  comparison: Optional[Dict] = None):
    """quality.json (all reports + comparison) and quality.csv (one row per arm)."""
    out_dir = Path(out_dir)
    DataExporter.export_json({
        'reports': [r.to_dict() for r in reports],
        'comparison': comparison or {},
        'metadata': metadata or {},
    }, out_dir / 'quality.json')
    DataExporter.export_csv([r.row() for r in reports], out_dir / 'quality.csv', metadata=metadata)


def plot_projection(real: np.ndarray, arms: Dict[str, np.ndarray], filepath: Path):
    """
    Scatter of the PCA projection with hull outlines, saved as SVG.

    The projection is fitted on the real set and all arms together.
    """
    names = list(arms)
    stacked = np.vstack([arms[n] for n in names])
    p_real, p_all = project_pca(real, stacked)

    fig, ax = plt.subplots(figsize=(5, 5))
    sets = [('real', p_real)]
    offset = 0
    for name in names:
        count = arms[name].shape[0]
        sets.append((name, p_all[offset:offset + count]))
        offset += count
    for name, pts in sets:
        line = ax.scatter(pts[:, 0], pts[:, 1], s=8, label=name)
        try:
            hull = convex_hull(pts)
        except ValueError:
            continue
        closed = np.vstack([hull, hull[:1]])
        ax.plot(closed[:, 0], closed[:, 1], color=line.get_facecolor()[0], linewidth=1)
    ax.set_xlabel('PC 1')
    ax.set_ylabel('PC 2')
    ax.legend(loc='best')
    DataExporter.export_plot(fig, filepath, format='svg')
    plt.close(fig)
