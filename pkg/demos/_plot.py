"""Optional plotting shared by the demos; silently skipped without matplotlib."""

from pathlib import Path

OUT = Path(__file__).resolve().parent / "figures"


def figure(name, draw):
    """Call ``draw(plt)`` and save ``figures/<name>.png`` if matplotlib is importable."""
    try:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        return None
    OUT.mkdir(exist_ok=True)
    draw(plt)
    path = OUT / f"{name}.png"
    plt.tight_layout()
    plt.savefig(path, dpi=120)
    plt.close("all")
    print(f"  figure written to {path}")
    return path
