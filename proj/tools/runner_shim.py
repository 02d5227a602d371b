#!/usr/bin/env python3
# SPDX-License-Identifier: Apache-2.0
"""Runs every test file in a workspace and writes one JSON record per test.

Usage: runner_shim.py --workspace DIR --report FILE

Each file DIR/tests/<id>.py is executed in a fresh namespace; its test
functions are called in definition order. The record for <id> is
{"test_id": <id>, "status": "pass"|"fail"|"error", "message": ...}.
Records are flushed as they are produced so a killed run leaves a readable
prefix behind.
"""

import argparse
import json
import os
import sys


def describe(exc):
    text = str(exc)
    return f"{type(exc).__name__}: {text}" if text else type(exc).__name__


def run_file(path, test_id):
    namespace = {"__name__": f"tddloop_test_{test_id}"}
    try:
        with open(path, encoding="utf-8") as f:
            source = f.read()
        exec(compile(source, f"{test_id}.py", "exec"), namespace)
    except BaseException as exc:  # noqa: B902 - user code may raise anything
        if isinstance(exc, KeyboardInterrupt):
            raise
        return "error", describe(exc)

    tests = [v for k, v in namespace.items() if k.startswith("test") and callable(v)]
    if not tests:
        return "error", "no test function found"
    for test in tests:
        try:
            test()
        except AssertionError as exc:
            return "fail", describe(exc)
        except BaseException as exc:  # noqa: B902
            if isinstance(exc, KeyboardInterrupt):
                raise
            return "error", describe(exc)
    return "pass", ""


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--workspace", required=True)
    parser.add_argument("--report", required=True)
    args = parser.parse_args()

    sys.dont_write_bytecode = True
    workspace = os.path.abspath(args.workspace)
    sys.path.insert(0, workspace)
    test_dir = os.path.join(workspace, "tests")
    names = sorted(n for n in os.listdir(test_dir) if n.endswith(".py")) if os.path.isdir(test_dir) else []

    with open(args.report, "w", encoding="utf-8") as report:
        for name in names:
            test_id = name[: -len(".py")]
            status, message = run_file(os.path.join(test_dir, name), test_id)
            report.write(json.dumps({"test_id": test_id, "status": status, "message": message}) + "\n")
            report.flush()
    return 0


if __name__ == "__main__":
    sys.exit(main())
