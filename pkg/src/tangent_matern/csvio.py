"""CSV readers and writers for observations, locations and result tables.

Every writer goes through a temporary file in the target directory and
``os.replace``, so an interrupted run never leaves a half-written file.
"""

import csv
import io
import os
import tempfile

import numpy as np

from . import sphere
from .observations import ObservationSet


def fmt(x):
    """Shortest repr that round-trips a float exactly."""
    return repr(float(x))


def fmt_loc(x):
    return f"{float(x):.10g}"


def atomic_write(path, text):
    path = os.fspath(path)
    folder = os.path.dirname(os.path.abspath(path))
    os.makedirs(folder, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=folder, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_rows(path, header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    atomic_write(path, buf.getvalue())


def _read_table(path):
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except FileNotFoundError:
        raise FileNotFoundError(f"data file not found: {path}") from None
    if not rows:
        raise ValueError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    body = [r for r in rows[1:] if r and any(c.strip() for c in r)]
    return header, body


def _columns(path, header, required):
    missing = [c for c in required if c not in header]
    if missing:
        raise ValueError(f"{path}: missing column(s) {missing}; header is {header}")
    return [header.index(c) for c in required]


def read_locations(path):
    header, body = _read_table(path)
    ilat, ilon = _columns(path, header, ["lat_deg", "lon_deg"])
    out = []
    for k, r in enumerate(body, start=2):
        try:
            out.append(sphere.from_latlon(float(r[ilat]), float(r[ilon])))
        except (ValueError, IndexError) as exc:
            raise ValueError(f"{path}, line {k}: {exc}") from None
    return out


def write_locations(path, locations):
    write_rows(path, ["lat_deg", "lon_deg"],
               [[fmt_loc(p.lat_deg), fmt_loc(p.lon_deg)] for p in locations])


def read_observations(path):
    """Replicated observations from ``[time|rep,]lat_deg,lon_deg,u,v``.

    Rows are grouped by the time (or rep) column in order of first
    appearance; every group must list the same locations in the same order.
    Without a time column the file holds a single replicate.
    """
    header, body = _read_table(path)
    ilat, ilon, iu, iv = _columns(path, header, ["lat_deg", "lon_deg", "u", "v"])
    tcol = next((header.index(c) for c in ("time", "rep") if c in header), None)
    groups = {}
    for k, r in enumerate(body, start=2):
        try:
            key = r[tcol].strip() if tcol is not None else "0"
            rec = (float(r[ilat]), float(r[ilon]), float(r[iu]), float(r[iv]))
        except (ValueError, IndexError):
            raise ValueError(f"{path}, line {k}: cannot parse row {r}") from None
        groups.setdefault(key, []).append(rec)
    times = list(groups)
    first = np.array(groups[times[0]])
    for t in times[1:]:
        arr = np.array(groups[t])
        if arr.shape != first.shape or not np.array_equal(arr[:, :2], first[:, :2]):
            raise ValueError(f"{path}: time {t!r} does not list the same locations "
                             f"as time {times[0]!r}")
    locs = [sphere.from_latlon(la, lo) for la, lo in first[:, :2]]
    values = np.stack([np.array(groups[t])[:, 2:] for t in times])
    parsed = []
    for t in times:
        try:
            parsed.append(int(t))
        except ValueError:
            parsed.append(t)
    return ObservationSet(locs, values, parsed)


def write_observations(path, obs, time_label="time"):
    rows = []
    for r in range(obs.n_reps):
        t = obs.times[r] if obs.times is not None else r
        for i, p in enumerate(obs.locations):
            rows.append([t, fmt_loc(p.lat_deg), fmt_loc(p.lon_deg),
                         fmt(obs.values[r, i, 0]), fmt(obs.values[r, i, 1])])
    write_rows(path, [time_label, "lat_deg", "lon_deg", "u", "v"], rows)


def write_matrix(path, header, matrix):
    write_rows(path, header, [[fmt(v) for v in row] for row in np.atleast_2d(matrix)])
