"""CSV artifacts exchanged between pipeline stages.

Representation tables and exploited-level tables are keyed by
``(game_id, player_index)`` and carry the demonstrator tag and terminal
reward as passthrough columns so downstream stages and plots never need
to re-open the raw dataset. Columns are fixed-order and floats use repr
round-tripping for byte-stable reruns. Every file starts with a comment
line carrying the format version and the seed that produced it, e.g.
``# format_version=1 seed=0``; readers skip ``#`` lines.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

FORMAT_VERSION = 1


def stamp(seed: int | None = None) -> list[str]:
    """The provenance comment row for CSV outputs."""
    text = f"# format_version={FORMAT_VERSION}"
    if seed is not None:
        text += f" seed={seed}"
    return [text]


def _reader_skipping_comments(fh):
    return csv.reader(line for line in fh if not line.startswith("#"))


@dataclass
class ReprRow:
    key: tuple[int, int]
    tag: str
    reward: float
    vector: np.ndarray


@dataclass
class ElRow:
    key: tuple[int, int]
    tag: str
    reward: float
    el_raw: float
    el_scaled: float


def write_repr_csv(path, rows: list[ReprRow], seed: int | None = None) -> None:
    if not rows:
        raise ValueError("no representation rows to write")
    width = len(rows[0].vector)
    header = ["game_id", "player_index", "demonstrator_tag", "reward"] + [
        f"l_{i}" for i in range(width)
    ]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(stamp(seed))
        writer.writerow(header)
        for row in rows:
            writer.writerow(
                [row.key[0], row.key[1], row.tag, repr(float(row.reward))]
                + [repr(float(v)) for v in row.vector]
            )


def read_repr_csv(path) -> list[ReprRow]:
    with open(path, newline="") as fh:
        reader = _reader_skipping_comments(fh)
        header = next(reader)
        width = len([c for c in header if c.startswith("l_")])
        rows = []
        for record in reader:
            rows.append(
                ReprRow(
                    key=(int(record[0]), int(record[1])),
                    tag=record[2],
                    reward=float(record[3]),
                    vector=np.array([float(v) for v in record[4 : 4 + width]]),
                )
            )
    return rows


def write_el_csv(path, rows: list[ElRow], seed: int | None = None) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(stamp(seed))
        writer.writerow(
            ["game_id", "player_index", "demonstrator_tag", "reward", "el_raw", "el_scaled"]
        )
        for row in rows:
            writer.writerow(
                [
                    row.key[0],
                    row.key[1],
                    row.tag,
                    repr(float(row.reward)),
                    repr(float(row.el_raw)),
                    repr(float(row.el_scaled)),
                ]
            )


def read_el_csv(path) -> list[ElRow]:
    with open(path, newline="") as fh:
        reader = _reader_skipping_comments(fh)
        next(reader)
        rows = []
        for record in reader:
            rows.append(
                ElRow(
                    key=(int(record[0]), int(record[1])),
                    tag=record[2],
                    reward=float(record[3]),
                    el_raw=float(record[4]),
                    el_scaled=float(record[5]),
                )
            )
    return rows


def merge_embeddings(repr_rows: list[ReprRow], el_rows: list[ElRow]) -> list[list]:
    """Join representations with exploited levels on the trajectory key.

    Returns plot-ready rows (one per trajectory). Raises if either side
    has keys the other lacks, listing the orphans.
    """
    el_by_key = {row.key: row for row in el_rows}
    repr_keys = {row.key for row in repr_rows}
    missing_el = sorted(repr_keys - set(el_by_key))
    missing_repr = sorted(set(el_by_key) - repr_keys)
    if missing_el or missing_repr:
        raise ValueError(
            "embedding export key mismatch: "
            f"missing exploited levels for {missing_el[:5]} "
            f"(total {len(missing_el)}), missing representations for "
            f"{missing_repr[:5]} (total {len(missing_repr)})"
        )
    merged = []
    for row in repr_rows:
        el = el_by_key[row.key]
        merged.append(
            [row.key[0], row.key[1], row.tag, repr(float(row.reward))]
            + [repr(float(v)) for v in row.vector]
            + [repr(float(el.el_raw)), repr(float(el.el_scaled))]
        )
    return merged


def write_embeddings_csv(
    path, repr_rows: list[ReprRow], el_rows: list[ElRow], seed: int | None = None
) -> None:
    if not repr_rows:
        raise ValueError("no representation rows to export")
    width = len(repr_rows[0].vector)
    header = (
        ["game_id", "player_index", "demonstrator_tag", "reward"]
        + [f"l_{i}" for i in range(width)]
        + ["el_raw", "el_scaled"]
    )
    merged = merge_embeddings(repr_rows, el_rows)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(stamp(seed))
        writer.writerow(header)
        writer.writerows(merged)


def write_matrix_csv(path, names: list[str], matrix: np.ndarray, seed: int | None = None) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(stamp(seed))
        writer.writerow([""] + list(names))
        for name, row in zip(names, matrix):
            writer.writerow([name] + [repr(float(v)) for v in row])


def write_summary_csv(path, rows: list[dict], columns: list[str], seed: int | None = None) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(stamp(seed))
        writer.writerow(columns)
        for row in rows:
            writer.writerow(
                [repr(row[c]) if isinstance(row[c], float) else row[c] for c in columns]
            )


def dataset_tag_reward(dataset) -> dict[tuple[int, int], tuple[str, float]]:
    return {
        traj.key: (traj.demonstrator_tag or "", traj.terminal_reward)
        for traj in dataset.trajectories
    }
