import ast
import builtins
import json
import os
import sys

MARKER = "__RERST_RESULT__"
scratch = os.path.realpath(sys.argv[1])


def emit(result):
    sys.stdout.flush()
    sys.__stdout__.write("\n" + MARKER + json.dumps(result) + "\n")
    sys.__stdout__.flush()
    os._exit(0)


def describe(exc):
    text = str(exc)
    return type(exc).__name__ + (": " + text if text else "")


with open(os.path.join(scratch, "program.py")) as fh:
    program = fh.read()
with open(os.path.join(scratch, "test.py")) as fh:
    test = fh.read()

try:
    code = compile(program, "<candidate>", "exec")
except SyntaxError as exc:
    emit({"syntax_error": "SyntaxError: %s (line %s)" % (exc.msg, exc.lineno)})

import socket


def _no_network(*args, **kwargs):
    raise OSError("network access is disabled")


socket.socket = _no_network
socket.create_connection = _no_network
socket.socketpair = _no_network

_open = builtins.open


def _guarded_open(file, mode="r", *args, **kwargs):
    if isinstance(file, int):
        raise PermissionError("file descriptors are not available")
    if any(c in mode for c in "wax+") and not _inside(file):
        raise PermissionError("writes outside the scratch directory are blocked")
    return _open(file, mode, *args, **kwargs)


def _inside(path):
    path = os.path.realpath(os.path.join(scratch, os.fsdecode(path)))
    return os.path.commonpath([path, scratch]) == scratch


def _guard_paths(fn):
    def wrapper(*args, **kwargs):
        for arg in args[:2]:
            if isinstance(arg, (str, bytes, os.PathLike)) and not _inside(arg):
                raise PermissionError("writes outside the scratch directory are blocked")
        return fn(*args, **kwargs)

    return wrapper


def _no_processes(*args, **kwargs):
    raise PermissionError("process creation is disabled")


builtins.open = _guarded_open
for _name in ("remove", "unlink", "rename", "replace", "mkdir", "makedirs", "rmdir", "symlink", "link", "truncate", "chmod"):
    if hasattr(os, _name):
        setattr(os, _name, _guard_paths(getattr(os, _name)))
for _name in ("system", "popen", "fork", "forkpty", "execv", "execve", "execvp", "execvpe", "spawnv", "spawnve", "posix_spawn", "posix_spawnp"):
    if hasattr(os, _name):
        setattr(os, _name, _no_processes)
import subprocess

subprocess.Popen = _no_processes

namespace = {"__name__": "__candidate__"}
try:
    exec(code, namespace)
except BaseException as exc:
    emit({"passed": False, "observed": describe(exc)})

try:
    tree = ast.parse(test)
    node = tree.body[0] if len(tree.body) == 1 else None
    if (
        isinstance(node, ast.Assert)
        and isinstance(node.test, ast.Compare)
        and len(node.test.ops) == 1
        and isinstance(node.test.ops[0], ast.Eq)
    ):
        left = eval(compile(ast.Expression(node.test.left), "<test>", "eval"), namespace)
        right = eval(compile(ast.Expression(node.test.comparators[0]), "<test>", "eval"), namespace)
        if left == right:
            emit({"passed": True, "observed": "output: " + repr(left)})
        emit({"passed": False, "observed": "output: " + repr(left)})
    exec(compile(tree, "<test>", "exec"), namespace)
    emit({"passed": True, "observed": ""})
except AssertionError as exc:
    emit({"passed": False, "observed": describe(exc)})
except BaseException as exc:
    emit({"passed": False, "observed": describe(exc)})
