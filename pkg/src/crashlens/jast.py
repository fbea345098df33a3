"""Structural parser for method-level Java snippets.

Produces a coarse AST (labels describe construct kinds, not operator
identity) for the syntax-subtree and def-use components of the code
similarity metric. Accepts a compilation unit, a run of member
declarations, a run of statements, or a bare expression; anything else
raises SnippetParseError.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .javalex import JavaLexError, MODIFIER_KEYWORDS, PRIMITIVE_TYPES, Token, tokenize

__all__ = ["Node", "SnippetParseError", "parse_snippet", "subtree_sexps", "dataflow_edges"]


class SnippetParseError(ValueError):
    pass


@dataclass(frozen=True)
class Node:
    label: str
    children: tuple["Node", ...] = ()
    text: str | None = None  # identifier/literal payload; not part of the structure


_ASSIGN_OPS = {"=", "+=", "-=", "*=", "/=", "%=", "&=", "|=", "^=", "<<=", ">>=", ">>>="}
_UNARY_START = {"!", "~", "+", "-", "++", "--"}
_STATEMENT_KEYWORDS = {
    "if", "while", "do", "for", "try", "switch", "return", "throw", "break",
    "continue", "assert", "synchronized", "class", "final", "new", "this", "super",
}


class _Parser:
    def __init__(self, toks: list[Token]):
        self.toks = toks
        self.pos = 0
        self.n = len(toks)

    # -- plumbing

    def peek(self, offset: int = 0) -> Token | None:
        i = self.pos + offset
        return self.toks[i] if i < self.n else None

    def at(self, text: str, offset: int = 0) -> bool:
        t = self.peek(offset)
        return t is not None and t.text == text

    def at_kind(self, kind: str, offset: int = 0) -> bool:
        t = self.peek(offset)
        return t is not None and t.kind == kind

    def take(self) -> Token:
        if self.pos >= self.n:
            raise SnippetParseError("unexpected end of snippet")
        tok = self.toks[self.pos]
        self.pos += 1
        return tok

    def expect(self, text: str) -> Token:
        tok = self.peek()
        if tok is None or tok.text != text:
            got = tok.text if tok else "<eof>"
            line = tok.line if tok else -1
            raise SnippetParseError(f"expected {text!r}, got {got!r} at line {line}")
        return self.take()

    def eof(self) -> bool:
        return self.pos >= self.n

    # -- entry

    def parse_snippet(self) -> Node:
        items: list[Node] = []
        while self.at("package") or self.at("import"):
            label = "Package" if self.at("package") else "Import"
            while not self.eof() and not self.at(";"):
                self.take()
            self.expect(";")
            items.append(Node(label))
        while not self.eof():
            items.append(self.parse_top_item())
        if not items:
            raise SnippetParseError("empty snippet")
        return Node("Snippet", tuple(items))

    def parse_top_item(self) -> Node:
        save = self.pos
        try:
            return self.parse_type_or_member()
        except SnippetParseError:
            self.pos = save
        return self.parse_statement()

    def parse_type_or_member(self) -> Node:
        save = self.pos
        mods = 0
        while True:
            if self.at("@") and not self.at("interface", 1):
                self.skip_annotation()
                mods += 1
            elif (t := self.peek()) is not None and t.text in MODIFIER_KEYWORDS:
                self.take()
                mods += 1
            else:
                break
        t = self.peek()
        if t is None:
            raise SnippetParseError("unexpected end after modifiers")
        if t.text in ("class", "interface", "enum"):
            return self.parse_type_decl()
        if self.at("<"):
            self.skip_type_args()
        # Constructor shape: Ident ( ... ) then '{' or 'throws'.
        if self.at_kind("ident") and self.at("(", 1):
            probe = self.pos
            try:
                self.take()
                self.skip_balanced("(", ")")
                if self.at("{") or self.at("throws"):
                    self.pos = probe
                    return self.parse_callable(ctor=True)
            except SnippetParseError:
                pass
            self.pos = probe
            if mods:
                raise SnippetParseError("modifiers before expression")
            raise SnippetParseError("not a member")
        self.parse_type()
        if not self.at_kind("ident"):
            raise SnippetParseError("expected member name")
        if self.at("(", 1):
            return self.parse_callable(ctor=False)
        # Field declaration.
        decls = [self.parse_var_declarator()]
        while self.at(","):
            self.take()
            decls.append(self.parse_var_declarator())
        self.expect(";")
        return Node("Field", tuple(decls))

    def parse_type_decl(self) -> Node:
        kind = self.take().text  # class | interface | enum
        name = self.take()
        if name.kind != "ident":
            raise SnippetParseError("expected type name")
        if self.at("<"):
            self.skip_type_args()
        while not self.eof() and not self.at("{"):
            self.take()
        self.expect("{")
        members: list[Node] = []
        while not self.at("}"):
            if self.at(";"):
                self.take()
                continue
            members.append(self.parse_type_or_member())
        self.expect("}")
        label = {"class": "ClassDecl", "interface": "InterfaceDecl", "enum": "EnumDecl"}[kind]
        return Node(label, tuple(members), text=name.text)

    def parse_callable(self, ctor: bool) -> Node:
        name = self.take()
        params = self.parse_params()
        while self.at("throws") or self.at_kind("ident") or self.at(".") or self.at(","):
            self.take()
        if self.at(";"):
            self.take()
            body: tuple[Node, ...] = ()
        else:
            body = (self.parse_block(),)
        label = "Ctor" if ctor else "Method"
        return Node(label, (params,) + body, text=name.text)

    def parse_params(self) -> Node:
        self.expect("(")
        params: list[Node] = []
        while not self.at(")"):
            while self.at("@"):
                self.skip_annotation()
            if self.at("final"):
                self.take()
            self.parse_type()
            if self.at("..."):
                self.take()
            pname = self.take()
            if pname.kind != "ident":
                raise SnippetParseError(f"expected parameter name, got {pname.text!r}")
            while self.at("[") and self.at("]", 1):
                self.take()
                self.take()
            params.append(Node("Param", (), text=pname.text))
            if self.at(","):
                self.take()
        self.expect(")")
        return Node("Params", tuple(params))

    # -- statements

    def parse_block(self) -> Node:
        self.expect("{")
        stmts: list[Node] = []
        while not self.at("}"):
            stmts.append(self.parse_statement())
        self.expect("}")
        return Node("Block", tuple(stmts))

    def parse_statement(self) -> Node:
        t = self.peek()
        if t is None:
            raise SnippetParseError("expected statement")
        text = t.text
        if text == "{":
            return self.parse_block()
        if text == ";":
            self.take()
            return Node("Empty")
        if text == "if":
            self.take()
            self.expect("(")
            cond = self.parse_expression()
            self.expect(")")
            then = self.parse_statement()
            if self.at("else"):
                self.take()
                return Node("If", (cond, then, self.parse_statement()))
            return Node("If", (cond, then))
        if text == "while":
            self.take()
            self.expect("(")
            cond = self.parse_expression()
            self.expect(")")
            return Node("While", (cond, self.parse_statement()))
        if text == "do":
            self.take()
            body = self.parse_statement()
            self.expect("while")
            self.expect("(")
            cond = self.parse_expression()
            self.expect(")")
            self.expect(";")
            return Node("DoWhile", (body, cond))
        if text == "for":
            return self.parse_for()
        if text == "try":
            return self.parse_try()
        if text == "switch":
            return self.parse_switch()
        if text == "return":
            self.take()
            if self.at(";"):
                self.take()
                return Node("Return")
            expr = self.parse_expression()
            self.expect(";")
            return Node("Return", (expr,))
        if text == "throw":
            self.take()
            expr = self.parse_expression()
            self.expect(";")
            return Node("Throw", (expr,))
        if text in ("break", "continue"):
            self.take()
            if self.at_kind("ident"):
                self.take()
            self.expect(";")
            return Node("Break" if text == "break" else "Continue")
        if text == "assert":
            self.take()
            first = self.parse_expression()
            parts = [first]
            if self.at(":"):
                self.take()
                parts.append(self.parse_expression())
            self.expect(";")
            return Node("Assert", tuple(parts))
        if text == "synchronized":
            self.take()
            self.expect("(")
            expr = self.parse_expression()
            self.expect(")")
            return Node("Sync", (expr, self.parse_block()))
        if text == "class":
            return self.parse_type_decl()
        # Local variable declaration vs expression statement: try the former.
        save = self.pos
        try:
            return self.parse_local_var()
        except SnippetParseError:
            self.pos = save
        expr = self.parse_expression()
        if self.at(";"):
            self.take()
        elif not self.eof():
            raise SnippetParseError("expected ';' after expression")
        return Node("ExprStmt", (expr,))

    def parse_local_var(self) -> Node:
        while self.at("@"):
            self.skip_annotation()
        if self.at("final"):
            self.take()
        self.parse_type()
        if not self.at_kind("ident"):
            raise SnippetParseError("not a local variable declaration")
        decls = [self.parse_var_declarator()]
        while self.at(","):
            self.take()
            decls.append(self.parse_var_declarator())
        self.expect(";")
        return Node("LocalVar", tuple(decls))

    def parse_var_declarator(self) -> Node:
        name = self.take()
        if name.kind != "ident":
            raise SnippetParseError("expected variable name")
        while self.at("[") and self.at("]", 1):
            self.take()
            self.take()
        if self.at("="):
            self.take()
            init = self.parse_array_init() if self.at("{") else self.parse_expression()
            return Node("VarDecl", (init,), text=name.text)
        if self.at("(") :
            raise SnippetParseError("call, not declarator")
        return Node("VarDecl", (), text=name.text)

    def parse_array_init(self) -> Node:
        self.expect("{")
        items: list[Node] = []
        while not self.at("}"):
            items.append(self.parse_array_init() if self.at("{") else self.parse_expression())
            if self.at(","):
                self.take()
        self.expect("}")
        return Node("ArrayInit", tuple(items))

    def parse_for(self) -> Node:
        self.take()
        self.expect("(")
        save = self.pos
        # Enhanced for: [final] Type ident : expr
        try:
            if self.at("final"):
                self.take()
            self.parse_type()
            var = self.take()
            if var.kind == "ident" and self.at(":"):
                self.take()
                iterable = self.parse_expression()
                self.expect(")")
                body = self.parse_statement()
                return Node("ForEach", (Node("VarDecl", (), text=var.text), iterable, body))
            raise SnippetParseError("not a foreach")
        except SnippetParseError:
            self.pos = save
        init: list[Node] = []
        if not self.at(";"):
            save = self.pos
            try:
                init.append(self.parse_local_var())  # consumes its ';'
            except SnippetParseError:
                self.pos = save
                init.append(self.parse_expression())
                while self.at(","):
                    self.take()
                    init.append(self.parse_expression())
                self.expect(";")
        else:
            self.take()
        cond: list[Node] = []
        if not self.at(";"):
            cond.append(self.parse_expression())
        self.expect(";")
        update: list[Node] = []
        if not self.at(")"):
            update.append(self.parse_expression())
            while self.at(","):
                self.take()
                update.append(self.parse_expression())
        self.expect(")")
        body = self.parse_statement()
        return Node("For", tuple(init + cond + update + [body]))

    def parse_try(self) -> Node:
        self.take()
        parts: list[Node] = []
        if self.at("("):
            self.take()
            resources: list[Node] = []
            while not self.at(")"):
                save = self.pos
                try:
                    if self.at("final"):
                        self.take()
                    self.parse_type()
                    name = self.take()
                    if name.kind != "ident":
                        raise SnippetParseError("expected resource name")
                    self.expect("=")
                    init = self.parse_expression()
                    resources.append(Node("VarDecl", (init,), text=name.text))
                except SnippetParseError:
                    self.pos = save
                    resources.append(self.parse_expression())
                if self.at(";"):
                    self.take()
            self.expect(")")
            parts.append(Node("Resources", tuple(resources)))
        parts.append(self.parse_block())
        while self.at("catch"):
            self.take()
            self.expect("(")
            if self.at("final"):
                self.take()
            self.parse_type()
            while self.at("|"):
                self.take()
                self.parse_type()
            name = self.take()
            if name.kind != "ident":
                raise SnippetParseError("expected catch parameter")
            self.expect(")")
            parts.append(Node("Catch", (Node("Param", (), text=name.text), self.parse_block())))
        if self.at("finally"):
            self.take()
            parts.append(Node("Finally", (self.parse_block(),)))
        return Node("Try", tuple(parts))

    def parse_switch(self) -> Node:
        self.take()
        self.expect("(")
        selector = self.parse_expression()
        self.expect(")")
        self.expect("{")
        cases: list[Node] = []
        current: list[Node] = []
        has_case = False

        def flush():
            nonlocal current, has_case
            if has_case:
                cases.append(Node("Case", tuple(current)))
            current = []

        while not self.at("}"):
            if self.at("case"):
                flush()
                has_case = True
                self.take()
                current.append(self.parse_expression())
                self.expect(":")
            elif self.at("default"):
                flush()
                has_case = True
                self.take()
                self.expect(":")
            else:
                current.append(self.parse_statement())
        flush()
        self.expect("}")
        return Node("Switch", (selector,) + tuple(cases))

    # -- types

    def parse_type(self) -> None:
        t = self.peek()
        if t is None:
            raise SnippetParseError("expected type")
        if t.text in PRIMITIVE_TYPES:
            self.take()
        elif t.kind == "ident":
            self.take()
            while self.at(".") and self.at_kind("ident", 1):
                self.take()
                self.take()
        else:
            raise SnippetParseError(f"expected type, got {t.text!r}")
        if self.at("<"):
            self.skip_type_args()
        while self.at("[") and self.at("]", 1):
            self.take()
            self.take()

    def skip_type_args(self) -> None:
        depth = 0
        while not self.eof():
            t = self.take()
            if t.text == "<":
                depth += 1
            elif t.text in (">", ">>", ">>>"):
                depth -= len(t.text)
                if depth <= 0:
                    if depth < 0:
                        raise SnippetParseError("unbalanced type arguments")
                    return
            elif t.kind in ("ident",) or t.text in (".", ",", "?", "extends", "super", "&", "[", "]", "@") or t.text in PRIMITIVE_TYPES:
                continue
            else:
                raise SnippetParseError(f"unexpected {t.text!r} in type arguments")
        raise SnippetParseError("unterminated type arguments")

    def skip_annotation(self) -> None:
        self.expect("@")
        name = self.take()
        if name.kind not in ("ident", "keyword"):
            raise SnippetParseError("malformed annotation")
        while self.at(".") and self.at_kind("ident", 1):
            self.take()
            self.take()
        if self.at("("):
            self.skip_balanced("(", ")")

    def skip_balanced(self, open_text: str, close_text: str) -> None:
        depth = 0
        while not self.eof():
            t = self.take()
            if t.text in "([{":
                depth += 1
            elif t.text in ")]}":
                depth -= 1
                if depth == 0:
                    return
        raise SnippetParseError(f"unbalanced {open_text}{close_text}")

    # -- expressions

    def parse_expression(self) -> Node:
        return self.parse_assignment()

    def parse_assignment(self) -> Node:
        lam = self.try_lambda()
        if lam is not None:
            return lam
        left = self.parse_ternary()
        t = self.peek()
        if t is not None and t.text in _ASSIGN_OPS:
            self.take()
            right = self.parse_assignment()
            return Node("Assign", (left, right))
        return left

    def try_lambda(self) -> Node | None:
        save = self.pos
        params: list[Node] = []
        if self.at_kind("ident") and self.at("->", 1):
            params.append(Node("Param", (), text=self.take().text))
            self.take()
        elif self.at("("):
            probe = self.pos
            try:
                self.take()
                while not self.at(")"):
                    tok = self.take()
                    if tok.kind != "ident" and tok.text not in PRIMITIVE_TYPES and tok.text not in (",", "<", ">", "[", "]", ".", "?", "extends", "super", "final"):
                        raise SnippetParseError("not lambda params")
                    if tok.kind == "ident" and (self.at(",") or self.at(")")):
                        params.append(Node("Param", (), text=tok.text))
                self.expect(")")
                if not self.at("->"):
                    raise SnippetParseError("no arrow")
                self.take()
            except SnippetParseError:
                self.pos = probe
                self.pos = save
                return None
        else:
            return None
        body = self.parse_block() if self.at("{") else self.parse_expression()
        return Node("Lambda", (Node("Params", tuple(params)), body))

    def parse_ternary(self) -> Node:
        cond = self.parse_binary(0)
        if self.at("?"):
            self.take()
            then = self.parse_expression()
            self.expect(":")
            other = self.parse_expression()
            return Node("Ternary", (cond, then, other))
        return cond

    _TIERS = [
        ("Or", {"||"}),
        ("And", {"&&"}),
        ("BitOr", {"|"}),
        ("BitXor", {"^"}),
        ("BitAnd", {"&"}),
        ("Equality", {"==", "!="}),
        ("Relational", {"<", ">", "<=", ">="}),
        ("Shift", {"<<", ">>", ">>>"}),
        ("Additive", {"+", "-"}),
        ("Multiplicative", {"*", "/", "%"}),
    ]

    def parse_binary(self, tier: int) -> Node:
        if tier >= len(self._TIERS):
            return self.parse_unary()
        label, ops = self._TIERS[tier]
        left = self.parse_binary(tier + 1)
        while True:
            t = self.peek()
            if label == "Relational" and t is not None and t.text == "instanceof":
                self.take()
                self.parse_type()
                left = Node("InstanceOf", (left,))
                continue
            if t is None or t.text not in ops:
                return left
            self.take()
            right = self.parse_binary(tier + 1)
            left = Node(label, (left, right))

    def parse_unary(self) -> Node:
        t = self.peek()
        if t is not None and t.text in _UNARY_START:
            self.take()
            operand = self.parse_unary()
            label = "PreIncDec" if t.text in ("++", "--") else "Unary"
            return Node(label, (operand,))
        if t is not None and t.text == "(":
            save = self.pos
            try:
                self.take()
                self.parse_type()
                self.expect(")")
                nxt = self.peek()
                if nxt is not None and (
                    nxt.kind in ("ident", "number", "string", "char")
                    or nxt.text in ("(", "!", "~", "new", "this", "super")
                ):
                    return Node("Cast", (self.parse_unary(),))
                raise SnippetParseError("not a cast")
            except SnippetParseError:
                self.pos = save
        return self.parse_postfix()

    def parse_postfix(self) -> Node:
        node = self.parse_primary()
        while True:
            if self.at("."):
                if self.at("<", 1):
                    self.take()
                    self.skip_type_args()
                    name = self.take()
                    args = self.parse_args()
                    node = Node("MethodCall", (node,) + args, text=name.text)
                    continue
                name = self.peek(1)
                if name is None:
                    raise SnippetParseError("dangling '.'")
                if name.text == "new":
                    raise SnippetParseError("qualified creation not supported")
                self.take()
                name = self.take()
                if name.kind == "keyword" and name.text not in ("this", "class", "super", "new"):
                    raise SnippetParseError(f"unexpected {name.text!r} after '.'")
                if self.at("("):
                    args = self.parse_args()
                    node = Node("MethodCall", (node,) + args, text=name.text)
                else:
                    node = Node("FieldAccess", (node,), text=name.text)
                continue
            if self.at("["):
                self.take()
                index = self.parse_expression()
                self.expect("]")
                node = Node("ArrayIndex", (node, index))
                continue
            if self.at("::"):
                self.take()
                ref = self.take()
                node = Node("MethodRef", (node,), text=ref.text)
                continue
            if self.at("++") or self.at("--"):
                self.take()
                node = Node("PostIncDec", (node,))
                continue
            return node

    def parse_args(self) -> tuple[Node, ...]:
        self.expect("(")
        args: list[Node] = []
        while not self.at(")"):
            args.append(self.parse_expression())
            if self.at(","):
                self.take()
        self.expect(")")
        return tuple(args)

    def parse_primary(self) -> Node:
        t = self.peek()
        if t is None:
            raise SnippetParseError("expected expression")
        if t.kind in ("number", "string", "char"):
            self.take()
            return Node("Literal", (), text=t.text)
        if t.text in ("true", "false", "null"):
            self.take()
            return Node("Literal", (), text=t.text)
        if t.text == "this":
            self.take()
            if self.at("("):
                return Node("CtorCall", self.parse_args())
            return Node("This")
        if t.text == "super":
            self.take()
            if self.at("("):
                return Node("CtorCall", self.parse_args())
            return Node("Super")
        if t.text == "new":
            return self.parse_creation()
        if t.text == "(":
            self.take()
            inner = self.parse_expression()
            self.expect(")")
            return Node("Paren", (inner,))
        if t.kind == "ident":
            self.take()
            if self.at("("):
                args = self.parse_args()
                return Node("MethodCall", args, text=t.text)
            return Node("Name", (), text=t.text)
        if t.text in PRIMITIVE_TYPES:
            # e.g. int.class / long[]::new; treat as a name-ish leaf.
            self.take()
            return Node("Name", (), text=t.text)
        raise SnippetParseError(f"unexpected token {t.text!r} at line {t.line}")

    def parse_creation(self) -> Node:
        self.expect("new")
        self.parse_type()
        if self.at("["):
            dims: list[Node] = []
            while self.at("["):
                self.take()
                if not self.at("]"):
                    dims.append(self.parse_expression())
                self.expect("]")
            if self.at("{"):
                dims.append(self.parse_array_init())
            return Node("NewArray", tuple(dims))
        args = self.parse_args() if self.at("(") else ()
        body: tuple[Node, ...] = ()
        if self.at("{"):
            members: list[Node] = []
            self.take()
            while not self.at("}"):
                if self.at(";"):
                    self.take()
                    continue
                members.append(self.parse_type_or_member())
            self.expect("}")
            body = (Node("AnonymousBody", tuple(members)),)
        return Node("New", args + body)


def parse_snippet(code: str) -> Node:
    try:
        toks = tokenize(code)
    except JavaLexError as exc:
        raise SnippetParseError(str(exc)) from exc
    if not toks:
        raise SnippetParseError("empty snippet")
    parser = _Parser(toks)
    node = parser.parse_snippet()
    return node


def subtree_sexps(root: Node) -> list[str]:
    """One serialized subtree per internal node (the complete subtree rooted
    there), labels only; leaves and identifier/literal payloads are excluded
    so the match is structural, not lexical."""
    out: list[str] = []

    def walk(node: Node) -> str:
        child_s = [walk(c) for c in node.children]
        s = node.label if not child_s else f"{node.label}({','.join(child_s)})"
        if node.children:
            out.append(s)
        return s

    walk(root)
    return out


def dataflow_edges(root: Node) -> list[tuple[str, int]]:
    """Def-use chain edges: for every variable read, (normalized variable
    name, ordinal of the definition that reaches it). Variables are
    renamed v0, v1, ... by first appearance so identical flow structure
    matches regardless of naming."""
    first_seen: dict[str, str] = {}
    def_counts: dict[str, int] = {}
    edges: list[tuple[str, int]] = []

    def norm(name: str) -> str:
        if name not in first_seen:
            first_seen[name] = f"v{len(first_seen)}"
        return first_seen[name]

    def define(name: str) -> None:
        norm(name)
        def_counts[name] = def_counts.get(name, 0) + 1

    def use(name: str) -> None:
        edges.append((norm(name), def_counts.get(name, 0)))

    def walk(node: Node) -> None:
        if node.label == "Name":
            if node.text:
                use(node.text)
            return
        if node.label == "Param":
            if node.text:
                define(node.text)
            return
        if node.label == "VarDecl":
            for child in node.children:
                walk(child)
            if node.text:
                define(node.text)
            return
        if node.label == "Assign":
            target, value = node.children[0], node.children[1]
            walk(value)
            if target.label == "Name" and target.text:
                define(target.text)
            else:
                walk(target)
            return
        if node.label in ("PreIncDec", "PostIncDec"):
            operand = node.children[0]
            if operand.label == "Name" and operand.text:
                use(operand.text)
                define(operand.text)
            else:
                walk(operand)
            return
        if node.label == "ForEach":
            var, iterable, body = node.children
            walk(iterable)
            if var.text:
                define(var.text)
            walk(body)
            return
        for child in node.children:
            walk(child)

    walk(root)
    return edges
