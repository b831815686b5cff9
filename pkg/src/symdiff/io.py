"""Deterministic, atomic file output."""
import csv
import io
import json
import os
import tempfile


def atomic_write_text(path, text):
    """Write ``text`` to ``path`` via a temp file in the same directory and rename."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dumps_json(doc):
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def write_json(path, doc):
    atomic_write_text(path, dumps_json(doc))


def format_csv(header, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def write_csv(path, header, rows):
    atomic_write_text(path, format_csv(header, rows))
