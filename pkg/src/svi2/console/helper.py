#!/usr/bin/env python

# MIT License

# Copyright (c) 2024 svi2 contributors

# See LICENSE for the full license text.

"""Utility helper class to format and send svi2 results
to either stdout, CSV or JSON files
Contains:
- OutputHelper() class
"""

import csv
import datetime
import json
import sys

from tabulate import SEPARATING_LINE, tabulate

from svi2 import __version__


class OutputHelper:
    """
    A class for formatting and outputting solver results
    Every file it writes carries the tool version and the effective
    configuration passed in at construction

    ...

    Attributes
    ----------
    config : dict
        effective configuration of the command

    Methods
    -------
    set_writer(to=None)
        If to=None, write() method sends to stdout.
        If to=path, write() method sends to that CSV file

    write(row)
        Write list or tuple of values to writer

    write_header(columns, start_date=None)
        Write comment rows with version and config, then the column row

    write_history_row(row)
        Write one PHM HistoryRow (nu, res, step, x_bar components)

    write_document(doc, path, fmt="json")
        Write a result dict as JSON or as key, value CSV rows

    print_table(rows, headers=())
        Print rows as a table to stdout

    print_status(info, status)
        Print problem info and status in table format
    """

    def __init__(self, config=None):
        """Class initializer

        Parameters
        ----------
        config : dict
            effective configuration embedded in every output
        """

        self.config = dict(config or {})
        self._csv_file = None
        self._csv_writer = csv.writer(sys.stdout)
        self._row_count = 0

    def __repr__(self):
        cls = self.__class__.__name__
        return f"{cls}(config={self.config!r})"

    def __str__(self):
        return "".join(["\nOutput Helper", f"\n  Config: {self.config}"])

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self._close()

    def __del__(self):
        self._close()

    def set_writer(self, to=None):
        """Sets the writer to stdout if to=None or
        to a csv_writer on the file at path to

        Parameters
        ----------
        to : str or path-like
            CSV file name, truncated on open
        """

        self._close()
        if to is not None:
            self._csv_file = open(to, "w", newline="", encoding="utf-8")
            self._csv_writer = csv.writer(self._csv_file, dialect="excel")
        else:
            self._csv_file = None
            self._csv_writer = csv.writer(sys.stdout)
        self._row_count = 0

    def write(self, row):
        """Send one row of values to the writer"""

        self._csv_writer.writerow(row)
        self._row_count += 1

    def write_header(self, columns, start_date=None):
        """Writes the comment rows and the column row

        Parameters
        ----------
        columns : list of str
            column names
        start_date : datetime object
            if None then grab current datetime
        """

        if not start_date:
            start_date = datetime.datetime.now()
        self._csv_writer.writerows(
            [
                ["#Log svi2", __version__],
                ["#Creation Date:", str(start_date)],
                ["#Config", json.dumps(self.config, sort_keys=True)],
                list(columns),
            ]
        )

    def write_history_row(self, row):
        """Write one PHM history row, usable as phm_fn.solve(history_sink=...)"""

        self.write([row.nu, repr(row.res), repr(row.step), *(repr(float(v)) for v in row.x_bar)])

    def write_document(self, doc, path, fmt="json"):
        """Write a result dict with version and config

        Parameters
        ----------
        doc : dict
            JSON-ready result
        path : str or path-like
        fmt : str
            "json" or "csv" (one key, value row per top-level entry)
        """

        full = {"version": __version__, "config": self.config}
        full.update(doc)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            if fmt == "json":
                json.dump(full, fh, indent=1)
                fh.write("\n")
            elif fmt == "csv":
                writer = csv.writer(fh, dialect="excel")
                writer.writerow(["key", "value"])
                for key, value in full.items():
                    if isinstance(value, (dict, list)):
                        value = json.dumps(value, sort_keys=True)
                    writer.writerow([key, value])
            else:
                raise ValueError(f"** unknown output format: {fmt}")

    @staticmethod
    def print_table(rows, headers=()):
        """Print rows as a table"""

        print(tabulate(rows, headers=headers, floatfmt=".3e"))

    @staticmethod
    def print_status(info, status):
        """Print SviProblem info and status in table format"""

        table = [
            [
                f"n: {info.get('n')}",
                f"m: {info.get('m')}",
                f"N: {info.get('n_scenarios')}",
            ],
            SEPARATING_LINE,
        ]
        if info.get("blocks"):
            table.append([f"{key}: {value}" for key, value in info["blocks"].items()])
        if status:
            table.append([f"{key}: {value}" for key, value in status.items()])
        print(tabulate(table))

    @property
    def row_count(self):
        return self._row_count

    def _close(self):
        """Closes file if open"""

        try:
            if self._csv_file and not self._csv_file.closed:
                self._csv_file.close()
        except AttributeError:
            pass
