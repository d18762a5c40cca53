"""Parser for the toy assembly language used by the workloads.

Source format, one statement per line, `#` starts a comment:

    .reg a b c              declare registers (pc is implicit)
    .crypto LO HI           crypto address range, inclusive (ints or labels)
    .secret LO HI           secret memory cell range, inclusive
    .func name target       declare a callable function entry point

    label:                  label the next instruction's address
    x <- expr               register assignment
    load x, expr            x := mem[expr]
    store x, expr           mem[expr] := x
    call name               push return address, jump to function
    beqz x, target          jump to target if x == 0, else fall through
    ret                     pop return address (empty stack exits)

Any instruction may carry a trailing `@c` tag marking it as part of the
constant-time region; control-flow instructions whose address falls inside
the .crypto range are tagged automatically.

Expressions: unsigned 64-bit integers (decimal or 0x hex), declared
registers, parentheses, unary `- ~ !`, and binary
`* / % + - << >> < <= > >= == != & ^ |` with C-like precedence.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from branchreplay.errors import ParseError

_TOKEN = re.compile(
    r"\s*(?:(?P<num>0[xX][0-9a-fA-F]+|\d+)"
    r"|(?P<name>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<op><<|>>|<=|>=|==|!=|<-|//|[-+*/%&|^~!<>(),])"
    r")"
)

# binary operator precedence, higher binds tighter
_PREC = {
    "|": 1, "^": 2, "&": 3,
    "==": 4, "!=": 4,
    "<": 5, "<=": 5, ">": 5, ">=": 5,
    "<<": 6, ">>": 6,
    "+": 7, "-": 7,
    "*": 8, "/": 8, "//": 8, "%": 8,
}


@dataclass(frozen=True)
class Instr:
    """One decoded instruction. `target` holds a resolved address for
    control flow; `expr` an expression AST; `reg` a register name."""

    op: str  # assign | load | store | call | beqz | ret
    reg: str | None = None
    expr: tuple | None = None
    target: int | None = None
    tag: bool = False
    line: int = 0


@dataclass(frozen=True)
class Program:
    instructions: tuple[Instr, ...]
    registers: frozenset[str]
    labels: dict[str, int]
    functions: dict[str, int]
    crypto: tuple[int, int] | None
    secret: tuple[int, int] | None
    source: str

    @property
    def terminal(self) -> int:
        """The exit address: one past the last instruction."""
        return len(self.instructions)

    def in_crypto(self, pc: int) -> bool:
        return self.crypto is not None and self.crypto[0] <= pc <= self.crypto[1]


def _tokenize(text: str, line_no: int) -> list[str]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            if text[pos:].strip():
                raise ParseError(f"cannot tokenize {text[pos:]!r}", line_no)
            break
        tokens.append(m.group(m.lastgroup))
        pos = m.end()
    return tokens


class _ExprParser:
    def __init__(self, tokens: list[str], registers: set[str], line_no: int):
        self.tokens = tokens
        self.pos = 0
        self.registers = registers
        self.line = line_no

    def peek(self) -> str | None:
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def take(self) -> str:
        tok = self.peek()
        if tok is None:
            raise ParseError("unexpected end of expression", self.line)
        self.pos += 1
        return tok

    def parse(self) -> tuple:
        e = self.parse_binary(1)
        return e

    def parse_binary(self, min_prec: int) -> tuple:
        left = self.parse_unary()
        while True:
            tok = self.peek()
            prec = _PREC.get(tok or "")
            if prec is None or prec < min_prec:
                return left
            self.take()
            right = self.parse_binary(prec + 1)
            left = ("bin", tok, left, right)

    def parse_unary(self) -> tuple:
        tok = self.peek()
        if tok in ("-", "~", "!"):
            self.take()
            return ("un", tok, self.parse_unary())
        return self.parse_atom()

    def parse_atom(self) -> tuple:
        tok = self.take()
        if tok == "(":
            e = self.parse_binary(1)
            if self.take() != ")":
                raise ParseError("expected ')'", self.line)
            return e
        if tok[0].isdigit():
            return ("int", int(tok, 0))
        if tok in self.registers:
            return ("reg", tok)
        raise ParseError(f"unknown register or token {tok!r}", self.line)


def _parse_expr(tokens: list[str], registers: set[str], line_no: int) -> tuple:
    p = _ExprParser(tokens, registers, line_no)
    e = p.parse()
    if p.peek() is not None:
        raise ParseError(f"trailing tokens after expression: {p.peek()!r}", line_no)
    return e


def _split_commas(tokens: list[str], line_no: int) -> list[list[str]]:
    """Split a token list on top-level commas."""
    parts: list[list[str]] = [[]]
    depth = 0
    for tok in tokens:
        if tok == "(":
            depth += 1
        elif tok == ")":
            depth -= 1
        if tok == "," and depth == 0:
            parts.append([])
        else:
            parts[-1].append(tok)
    if any(not p for p in parts):
        raise ParseError("empty operand", line_no)
    return parts


@dataclass
class _Pending:
    """Instruction awaiting label resolution."""

    op: str
    reg: str | None
    expr: tuple | None
    target_tok: str | None
    tag: bool
    line: int
    labels_needed: list[str] = field(default_factory=list)


def parse_program(text: str) -> Program:
    """Parse source text into a Program. Raises ParseError with the
    offending line number on any grammar violation."""
    registers: set[str] = set()
    labels: dict[str, int] = {}
    func_decls: list[tuple[str, str, int]] = []  # (name, target token, line)
    crypto_toks: tuple[str, str, int] | None = None
    secret_toks: tuple[str, str, int] | None = None
    pending: list[_Pending] = []

    for line_no, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue

        if line.startswith("."):
            fields = line.split()
            directive = fields[0]
            if directive == ".reg":
                if len(fields) < 2:
                    raise ParseError(".reg needs at least one name", line_no)
                for name in fields[1:]:
                    if not re.fullmatch(r"[A-Za-z_][A-Za-z0-9_]*", name):
                        raise ParseError(f"bad register name {name!r}", line_no)
                    if name == "pc":
                        raise ParseError("pc is implicit", line_no)
                    registers.add(name)
            elif directive == ".crypto":
                if len(fields) != 3:
                    raise ParseError(".crypto needs LO HI", line_no)
                crypto_toks = (fields[1], fields[2], line_no)
            elif directive == ".secret":
                if len(fields) != 3:
                    raise ParseError(".secret needs LO HI", line_no)
                secret_toks = (fields[1], fields[2], line_no)
            elif directive == ".func":
                if len(fields) != 3:
                    raise ParseError(".func needs NAME TARGET", line_no)
                func_decls.append((fields[1], fields[2], line_no))
            else:
                raise ParseError(f"unknown directive {directive}", line_no)
            continue

        # labels: one or more `name:` prefixes, then optionally an instruction
        while True:
            m = re.match(r"([A-Za-z_][A-Za-z0-9_]*)\s*:\s*(.*)", line)
            if not m:
                break
            name = m.group(1)
            if name in labels:
                raise ParseError(f"duplicate label {name!r}", line_no)
            labels[name] = len(pending)
            line = m.group(2)
        if not line:
            continue

        # trailing tag
        tag = False
        m = re.search(r"@c\s*$", line)
        if m:
            tag = True
            line = line[:m.start()].strip()

        tokens = _tokenize(line, line_no)
        if not tokens:
            raise ParseError("empty instruction", line_no)

        if len(tokens) >= 2 and tokens[1] == "<-":
            reg = tokens[0]
            if reg not in registers:
                raise ParseError(f"assignment to undeclared register {reg!r}", line_no)
            expr = _parse_expr(tokens[2:], registers, line_no)
            pending.append(_Pending("assign", reg, expr, None, tag, line_no))
            continue

        head, rest = tokens[0], tokens[1:]
        if head in ("load", "store"):
            parts = _split_commas(rest, line_no)
            if len(parts) != 2 or len(parts[0]) != 1:
                raise ParseError(f"{head} needs REG, EXPR", line_no)
            reg = parts[0][0]
            if reg not in registers:
                raise ParseError(f"{head} names undeclared register {reg!r}", line_no)
            expr = _parse_expr(parts[1], registers, line_no)
            pending.append(_Pending(head, reg, expr, None, tag, line_no))
        elif head == "call":
            if len(rest) != 1:
                raise ParseError("call needs one target", line_no)
            pending.append(_Pending("call", None, None, rest[0], tag, line_no))
        elif head == "beqz":
            parts = _split_commas(rest, line_no)
            if len(parts) != 2 or len(parts[0]) != 1 or len(parts[1]) != 1:
                raise ParseError("beqz needs REG, TARGET", line_no)
            reg = parts[0][0]
            if reg not in registers:
                raise ParseError(f"beqz tests undeclared register {reg!r}", line_no)
            pending.append(_Pending("beqz", reg, None, parts[1][0], tag, line_no))
        elif head == "ret":
            if rest:
                raise ParseError("ret takes no operands", line_no)
            pending.append(_Pending("ret", None, None, None, tag, line_no))
        else:
            raise ParseError(f"unknown instruction {head!r}", line_no)

    n = len(pending)

    def resolve_addr(tok: str, line_no: int, *, allow_terminal: bool = True) -> int:
        if tok in labels:
            return labels[tok]
        try:
            value = int(tok, 0)
        except ValueError:
            raise ParseError(f"unknown label {tok!r}", line_no) from None
        hi = n if allow_terminal else n - 1
        if not 0 <= value <= hi:
            raise ParseError(f"address {value} outside program", line_no)
        return value

    functions: dict[str, int] = {}
    for name, tok, line_no in func_decls:
        functions[name] = resolve_addr(tok, line_no, allow_terminal=False)

    def resolve_range(toks, what) -> tuple[int, int] | None:
        if toks is None:
            return None
        lo_tok, hi_tok, line_no = toks
        if what == "crypto":
            lo = resolve_addr(lo_tok, line_no)
            hi = resolve_addr(hi_tok, line_no)
        else:
            try:
                lo, hi = int(lo_tok, 0), int(hi_tok, 0)
            except ValueError:
                raise ParseError(f"bad .{what} bound", line_no) from None
        if lo > hi:
            raise ParseError(f".{what} range is empty", line_no)
        return (lo, hi)

    crypto = resolve_range(crypto_toks, "crypto")
    secret = resolve_range(secret_toks, "secret")

    instrs: list[Instr] = []
    for addr, p in enumerate(pending):
        target = None
        if p.op == "call":
            if p.target_tok in functions:
                target = functions[p.target_tok]
            else:
                target = resolve_addr(p.target_tok, p.line, allow_terminal=False)
        elif p.op == "beqz":
            target = resolve_addr(p.target_tok, p.line)
        tag = p.tag
        if p.op in ("beqz", "call", "ret") and crypto and crypto[0] <= addr <= crypto[1]:
            tag = True
        instrs.append(Instr(p.op, p.reg, p.expr, target, tag, p.line))

    return Program(
        instructions=tuple(instrs),
        registers=frozenset(registers),
        labels=dict(labels),
        functions=functions,
        crypto=crypto,
        secret=secret,
        source=text,
    )
