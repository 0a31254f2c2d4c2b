"""Common utilities for CLI output."""

import math
import sys
from collections import defaultdict

from .metrics import MetricReport
from .training import LossRecord

# Standard display width for separators
SEPARATOR_WIDTH = 70
MAX_ID_LENGTH = 40
SUMMARY_WINDOW = 100


class AnsiColors:
    """ANSI escape codes for terminal colors."""

    RESET = "\033[0m"
    BOLD = "\033[1m"
    RED = "\033[31m"
    GREEN = "\033[32m"
    YELLOW = "\033[33m"
    CYAN = "\033[36m"


def colorize(text: str, color: str) -> str:
    """Apply ANSI color to text.

    Args:
    ----
        text: The text to colorize
        color: ANSI color code (use AnsiColors constants)

    Returns:
    -------
        Text wrapped with color codes

    """
    return f"{color}{text}{AnsiColors.RESET}"


def truncate_text(text: str, max_length: int, ellipsis: str = "...") -> str:
    """Shorten text from the start so the distinguishing tail of a path stays visible."""
    if len(text) <= max_length:
        return text
    return ellipsis + text[-(max_length - len(ellipsis)) :]


def print_separator(char: str = "=", newline_before: bool = False) -> None:
    """Print a separator line.

    Args:
    ----
        char: Character to use for the separator (default: "=")
        newline_before: Whether to print a newline before the separator

    """
    prefix = "\n" if newline_before else ""
    print(f"{prefix}{char * SEPARATOR_WIDTH}")


def print_error(message: str) -> None:
    """Print an error line to stderr in red."""
    print(colorize(f"Error: {message}", AnsiColors.RED), file=sys.stderr)


def print_metric_report(report: MetricReport, title: str = "Evaluation") -> None:
    """Print per-image scores, then the means and any skipped pairs."""
    print_separator(newline_before=True)
    print(colorize(title, AnsiColors.BOLD))
    print_separator("-")
    print(f"{'id':<{MAX_ID_LENGTH}} {'PSNR (dB)':>10} {'SSIM':>8}")
    for score in report.per_image:
        image_id = truncate_text(score.image_id, MAX_ID_LENGTH)
        print(f"{image_id:<{MAX_ID_LENGTH}} {score.psnr_db:>10.3f} {score.ssim:>8.4f}")
    print_separator("-")
    if report.count:
        mean_line = (
            f"{'mean of ' + str(report.count):<{MAX_ID_LENGTH}} "
            f"{report.mean_psnr_db:>10.3f} {report.mean_ssim:>8.4f}"
        )
        print(colorize(mean_line, AnsiColors.GREEN))
    else:
        print(colorize("No pairs could be evaluated", AnsiColors.RED))
    if report.partial:
        print(colorize(f"Partial evaluation: {len(report.skipped)} skipped", AnsiColors.YELLOW))
        for skipped in report.skipped:
            print(f"  - {skipped.image_id}: {skipped.reason}")


def _window_mean(values: list[float]) -> float:
    return math.fsum(values) / len(values) if values else math.nan


def print_loss_summary(history: list[LossRecord]) -> None:
    """Print, per scale, the generator loss averaged over the first and last iterations."""
    by_scale: dict[int, list[LossRecord]] = defaultdict(list)
    for record in history:
        by_scale[record.scale].append(record)
    print_separator(newline_before=True)
    print(colorize("Training summary (generator total / reconstruction)", AnsiColors.BOLD))
    print_separator("-")
    for scale in sorted(by_scale, reverse=True):
        records = by_scale[scale]
        window = min(SUMMARY_WINDOW, len(records))
        first = _window_mean([r.g_total for r in records[:window]])
        last = _window_mean([r.g_total for r in records[-window:]])
        first_rec = _window_mean([r.g_rec for r in records[:window]])
        last_rec = _window_mean([r.g_rec for r in records[-window:]])
        color = AnsiColors.GREEN if last < first else AnsiColors.YELLOW
        line = (
            f"scale {scale:>2}: total {first:>9.4f} -> {last:>9.4f}   "
            f"rec {first_rec:.5f} -> {last_rec:.5f}   sigma {records[-1].sigma:.4f}"
        )
        print(colorize(line, color))
