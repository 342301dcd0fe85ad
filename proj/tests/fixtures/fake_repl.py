#!/usr/bin/env python3
"""Stand-in for a Lean REPL: newline-delimited JSON commands in, one JSON
response (followed by a blank line) out. Behavior switches on the command
text so subprocess handling can be exercised without a Lean toolchain."""
import json
import sys
import time

MODE = sys.argv[1] if len(sys.argv) > 1 else "normal"

SORRY_WARNING = {
    "messages": [{"severity": "warning", "pos": {"line": 2, "column": 8},
                  "endPos": {"line": 2, "column": 12},
                  "data": "declaration uses 'sorry'"}],
    "env": 0,
}

def read_command():
    lines = []
    while True:
        line = sys.stdin.readline()
        if line == "":
            return None
        line = line.rstrip("\n")
        if line == "":
            if lines:
                break
            continue
        lines.append(line)
    return json.loads("\n".join(lines))

def respond(obj):
    sys.stdout.write(json.dumps(obj, ensure_ascii=False) + "\n\n")
    sys.stdout.flush()

if MODE == "silent":  # never answers: forces startup/check timeouts
    while read_command() is not None:
        time.sleep(3600)
    sys.exit(0)

served = 0
while True:
    cmd = read_command()
    if cmd is None:
        break
    src = cmd.get("cmd", "")
    served += 1
    if MODE == "crash_after_handshake" and served >= 2:
        sys.exit(1)
    if MODE == "garbage" and served >= 2:
        sys.stdout.write("*** stack overflow in elaborator ***\n\n")
        sys.stdout.flush()
        continue
    if MODE == "slow" and served >= 2:
        time.sleep(3600)
        continue
    if "1 = 2" in src:
        respond({"messages": [{"severity": "error",
                               "pos": {"line": 2, "column": 24},
                               "endPos": {"line": 2, "column": 27},
                               "data": "type mismatch\n  rfl\nhas type\n  1 = 1 : Prop\n"
                                       "but is expected to have type\n  1 = 2 : Prop"}]})
    elif "sorry" in src:
        respond(SORRY_WARNING)
    else:
        respond({"messages": [], "env": served})
