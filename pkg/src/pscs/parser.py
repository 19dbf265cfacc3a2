"""Recursive-descent parser for a Java-like method subset.

Covers one method declaration per input: modifiers, primitive/class/array
types, blocks, if/else, for, while, local variable declarations,
assignments (incl. compound operators), method invocation with dotted
receivers, return, literals, and binary/unary expressions. Everything else
(generics, lambdas, new, arrays indexing, try/catch, ...) is a parse error
that names the offending lexeme and position.

Parsing is deterministic: the same source always yields the same tree,
node ids included (pre-order).
"""

from .ast import Ast, STRING_PLACEHOLDER

PRIMITIVE_TYPES = {
    "void", "int", "long", "short", "byte", "char",
    "float", "double", "boolean",
}

MODIFIERS = {"public", "private", "protected", "static", "final", "abstract",
             "synchronized", "native"}

# recognized but unsupported: reserved so misuse fails loudly instead of
# parsing as an identifier
RESERVED = {
    "new", "class", "interface", "enum", "extends", "implements", "try",
    "catch", "finally", "throw", "throws", "switch", "case", "default",
    "break", "continue", "do", "instanceof", "super", "import", "package",
}

KEYWORDS = PRIMITIVE_TYPES | MODIFIERS | RESERVED | {
    "if", "else", "for", "while", "return", "true", "false", "null", "this",
}

_TWO_CHAR_OPS = {
    "==", "!=", "<=", ">=", "&&", "||", "++", "--", "+=", "-=", "*=", "/=", "%=",
}
_ONE_CHAR = set("+-*/%<>=!(){}[];,.&|")

_ASSIGN_OPS = {"=", "+=", "-=", "*=", "/=", "%="}

# binary operator precedence, loosest first
_BINARY_LEVELS = [
    {"||"},
    {"&&"},
    {"==", "!="},
    {"<", ">", "<=", ">="},
    {"+", "-"},
    {"*", "/", "%"},
]


class ParseError(SyntaxError):
    """Syntax outside the supported subset, with position and lexeme."""

    def __init__(self, message, line, col, lexeme):
        super().__init__(f"{message} at line {line}, column {col}: {lexeme!r}")
        self.line = line
        self.col = col
        self.lexeme = lexeme


class _Token:
    __slots__ = ("kind", "text", "line", "col")

    def __init__(self, kind, text, line, col):
        self.kind = kind      # ident | keyword | number | string | op | eof
        self.text = text
        self.line = line
        self.col = col


def _tokenize(source: str):
    tokens = []
    i = 0
    line, col = 1, 1
    n = len(source)

    def advance(k):
        nonlocal i, line, col
        for _ in range(k):
            if source[i] == "\n":
                line += 1
                col = 1
            else:
                col += 1
            i += 1

    while i < n:
        ch = source[i]
        if ch.isspace():
            advance(1)
            continue
        if source.startswith("//", i):
            j = source.find("\n", i)
            advance((n if j < 0 else j) - i)
            continue
        if source.startswith("/*", i):
            j = source.find("*/", i + 2)
            if j < 0:
                raise ParseError("unterminated comment", line, col, "/*")
            advance(j + 2 - i)
            continue
        if ch.isalpha() or ch == "_" or ch == "$":
            j = i
            while j < n and (source[j].isalnum() or source[j] in "_$"):
                j += 1
            text = source[i:j]
            kind = "keyword" if text in KEYWORDS else "ident"
            tokens.append(_Token(kind, text, line, col))
            advance(j - i)
            continue
        if ch.isdigit():
            j = i
            while j < n and (source[j].isalnum() or source[j] == "."):
                # consumes int/float/hex forms greedily; '1.x()' is outside the subset
                if source[j] == "." and not (j + 1 < n and source[j + 1].isdigit()):
                    break
                j += 1
            tokens.append(_Token("number", source[i:j], line, col))
            advance(j - i)
            continue
        if ch in "\"'":
            quote = ch
            j = i + 1
            while j < n and source[j] != quote:
                j += 2 if source[j] == "\\" else 1
            if j >= n:
                raise ParseError("unterminated literal", line, col, quote)
            tokens.append(_Token("string", source[i:j + 1], line, col))
            advance(j + 1 - i)
            continue
        two = source[i:i + 2]
        if two in _TWO_CHAR_OPS:
            tokens.append(_Token("op", two, line, col))
            advance(2)
            continue
        if ch in _ONE_CHAR:
            tokens.append(_Token("op", ch, line, col))
            advance(1)
            continue
        raise ParseError("unexpected character", line, col, ch)
    tokens.append(_Token("eof", "", line, col))
    return tokens


class _Parser:
    """Builds an (label, children) arena in pre-order as it descends."""

    def __init__(self, source: str):
        self.tokens = _tokenize(source)
        self.pos = 0
        self.arena = []   # list of [label, child_id_list]

    # -- token helpers -----------------------------------------------------
    def peek(self, ahead=0) -> _Token:
        return self.tokens[min(self.pos + ahead, len(self.tokens) - 1)]

    def at(self, text) -> bool:
        return self.peek().text == text and self.peek().kind in ("op", "keyword")

    def take(self) -> _Token:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect(self, text) -> _Token:
        tok = self.peek()
        if tok.text != text:
            raise ParseError(f"expected {text!r}", tok.line, tok.col,
                             tok.text or "<end of input>")
        return self.take()

    def fail(self, message):
        tok = self.peek()
        raise ParseError(message, tok.line, tok.col, tok.text or "<end of input>")

    # -- arena helpers -----------------------------------------------------
    def node(self, label) -> int:
        self.arena.append([label, []])
        return len(self.arena) - 1

    def terminal(self, text) -> int:
        return self.node(text)

    def attach(self, parent, child):
        self.arena[parent][1].append(child)

    def wrap(self, label, text) -> int:
        nid = self.node(label)
        self.attach(nid, self.terminal(text))
        return nid

    # -- grammar -----------------------------------------------------------
    def parse_method(self) -> Ast:
        if self.peek().kind == "eof":
            self.fail("empty input, expected a method declaration")
        md = self.node("MethodDeclaration")
        while self.peek().kind == "keyword" and self.peek().text in MODIFIERS:
            self.attach(md, self.wrap("Modifier", self.take().text))
        self.attach(md, self.parse_type())
        name = self.expect_ident("method name")
        self.attach(md, self.wrap("SimpleName", name))
        self.expect("(")
        if not self.at(")"):
            while True:
                self.attach(md, self.parse_formal_parameter())
                if self.at(","):
                    self.take()
                else:
                    break
        self.expect(")")
        self.attach(md, self.parse_block())
        tok = self.peek()
        if tok.kind != "eof":
            raise ParseError("trailing input after method", tok.line, tok.col, tok.text)
        arena, root = _reindex_preorder(self.arena, md)
        return Ast.from_arena(arena, root)

    def expect_ident(self, what) -> str:
        tok = self.peek()
        if tok.kind != "ident":
            self.fail(f"expected {what}")
        return self.take().text

    def parse_type(self) -> int:
        tok = self.peek()
        if tok.kind == "keyword" and tok.text in PRIMITIVE_TYPES:
            base = self.wrap("PrimitiveType", self.take().text)
        elif tok.kind == "ident":
            base = self.node("SimpleType")
            self.attach(base, self.wrap("SimpleName", self.take().text))
            while self.at(".") and self.peek(1).kind == "ident":
                self.take()
                self.attach(base, self.wrap("SimpleName", self.take().text))
        else:
            self.fail("expected a type")
        while self.at("[") and self.peek(1).text == "]":
            self.take()
            self.take()
            arr = self.node("ArrayType")
            self.attach(arr, base)
            base = arr
        return base

    def parse_formal_parameter(self) -> int:
        fp = self.node("FormalParameter")
        self.attach(fp, self.parse_type())
        self.attach(fp, self.wrap("SimpleName", self.expect_ident("parameter name")))
        return fp

    def parse_block(self) -> int:
        blk = self.node("Block")
        self.expect("{")
        while not self.at("}"):
            if self.peek().kind == "eof":
                self.fail("unterminated block")
            self.attach(blk, self.parse_statement())
        self.expect("}")
        if not self.arena[blk][1]:
            # childless non-terminals are invalid; an empty block reads as {;}
            self.attach(blk, self.wrap("EmptyStatement", ";"))
        return blk

    def parse_statement(self) -> int:
        tok = self.peek()
        if tok.text == "{":
            return self.parse_block()
        if tok.text == ";":
            self.take()
            return self.wrap("EmptyStatement", ";")
        if tok.kind == "keyword":
            if tok.text == "if":
                return self.parse_if()
            if tok.text == "for":
                return self.parse_for()
            if tok.text == "while":
                return self.parse_while()
            if tok.text == "return":
                return self.parse_return()
            if tok.text in PRIMITIVE_TYPES:
                return self.parse_local_declaration()
            if tok.text in RESERVED:
                self.fail("construct outside the supported subset")
        if self.looks_like_declaration():
            return self.parse_local_declaration()
        stmt = self.node("ExpressionStatement")
        self.attach(stmt, self.parse_expression())
        self.expect(";")
        return stmt

    def looks_like_declaration(self) -> bool:
        """A class-type declaration starts ident ('.' ident)* ('[' ']')* ident."""
        if self.peek().kind != "ident":
            return False
        k = 1
        while self.peek(k).text == "." and self.peek(k + 1).kind == "ident":
            k += 2
        while self.peek(k).text == "[" and self.peek(k + 1).text == "]":
            k += 2
        return self.peek(k).kind == "ident"

    def parse_local_declaration(self, consume_semicolon=True) -> int:
        decl = self.node("VariableDeclarationStatement")
        self.attach(decl, self.parse_type())
        while True:
            frag = self.node("VariableDeclarationFragment")
            self.attach(frag, self.wrap("SimpleName", self.expect_ident("variable name")))
            if self.at("="):
                self.take()
                self.attach(frag, self.parse_expression())
            self.attach(decl, frag)
            if self.at(","):
                self.take()
            else:
                break
        if consume_semicolon:
            self.expect(";")
        return decl

    def parse_if(self) -> int:
        node = self.node("IfStatement")
        self.expect("if")
        self.expect("(")
        self.attach(node, self.parse_expression())
        self.expect(")")
        self.attach(node, self.parse_statement())
        if self.at("else"):
            self.take()
            self.attach(node, self.parse_statement())
        return node

    def parse_while(self) -> int:
        node = self.node("WhileStatement")
        self.expect("while")
        self.expect("(")
        self.attach(node, self.parse_expression())
        self.expect(")")
        self.attach(node, self.parse_statement())
        return node

    def parse_for(self) -> int:
        node = self.node("ForStatement")
        self.expect("for")
        self.expect("(")
        if self.at(";"):
            self.take()
        elif self.peek().text in PRIMITIVE_TYPES or self.looks_like_declaration():
            self.attach(node, self.parse_local_declaration())
        else:
            self.attach(node, self.expression_statement_no_semi())
            self.expect(";")
        if not self.at(";"):
            self.attach(node, self.parse_expression())
        self.expect(";")
        if not self.at(")"):
            while True:
                self.attach(node, self.expression_statement_no_semi())
                if self.at(","):
                    self.take()
                else:
                    break
        self.expect(")")
        self.attach(node, self.parse_statement())
        return node

    def expression_statement_no_semi(self) -> int:
        stmt = self.node("ExpressionStatement")
        self.attach(stmt, self.parse_expression())
        return stmt

    def parse_return(self) -> int:
        node = self.node("ReturnStatement")
        self.expect("return")
        if self.at(";"):
            # keep the keyword as the terminal so the node is never childless
            self.attach(node, self.terminal("return"))
        else:
            self.attach(node, self.parse_expression())
        self.expect(";")
        return node

    # expressions, loosest binding first
    def parse_expression(self) -> int:
        return self.parse_assignment()

    def parse_assignment(self) -> int:
        left = self.parse_binary(0)
        if self.peek().kind == "op" and self.peek().text in _ASSIGN_OPS:
            self.take()
            node = self.node("Assignment")
            self.attach(node, left)
            self.attach(node, self.parse_assignment())
            return node
        return left

    def parse_binary(self, level) -> int:
        if level == len(_BINARY_LEVELS):
            return self.parse_unary()
        left = self.parse_binary(level + 1)
        while self.peek().kind == "op" and self.peek().text in _BINARY_LEVELS[level]:
            self.take()
            node = self.node("InfixExpression")
            self.attach(node, left)
            self.attach(node, self.parse_binary(level + 1))
            left = node
        return left

    def parse_unary(self) -> int:
        tok = self.peek()
        if tok.kind == "op" and tok.text in ("!", "-", "+", "++", "--"):
            self.take()
            node = self.node("PrefixExpression")
            self.attach(node, self.parse_unary())
            return node
        return self.parse_postfix()

    def parse_postfix(self) -> int:
        expr = self.parse_primary()
        while True:
            if self.at(".") and self.peek(1).kind == "ident":
                if self.peek(2).text == "(":
                    self.take()
                    name = self.take().text
                    expr = self.finish_invocation(expr, name)
                else:
                    self.take()
                    node = self.node("FieldAccess")
                    self.attach(node, expr)
                    self.attach(node, self.wrap("SimpleName", self.take().text))
                    expr = node
            elif self.peek().text in ("++", "--"):
                self.take()
                node = self.node("PostfixExpression")
                self.attach(node, expr)
                expr = node
            else:
                return expr

    def finish_invocation(self, receiver, name) -> int:
        node = self.node("MethodInvocation")
        if receiver is not None:
            self.attach(node, receiver)
        self.attach(node, self.wrap("SimpleName", name))
        self.expect("(")
        if not self.at(")"):
            while True:
                self.attach(node, self.parse_expression())
                if self.at(","):
                    self.take()
                else:
                    break
        self.expect(")")
        return node

    def parse_primary(self) -> int:
        tok = self.peek()
        if tok.kind == "number":
            self.take()
            return self.wrap("NumberLiteral", tok.text)
        if tok.kind == "string":
            self.take()
            return self.wrap("StringLiteral", STRING_PLACEHOLDER)
        if tok.kind == "keyword":
            if tok.text in ("true", "false"):
                self.take()
                return self.wrap("BooleanLiteral", tok.text)
            if tok.text == "null":
                self.take()
                return self.wrap("NullLiteral", "null")
            if tok.text == "this":
                self.take()
                return self.wrap("ThisExpression", "this")
            self.fail("construct outside the supported subset")
        if tok.text == "(":
            self.take()
            node = self.node("ParenthesizedExpression")
            self.attach(node, self.parse_expression())
            self.expect(")")
            return node
        if tok.kind == "ident":
            name = self.take().text
            if self.at("("):
                return self.finish_invocation(None, name)
            return self.wrap("SimpleName", name)
        self.fail("expected an expression")


def _reindex_preorder(arena, root):
    """Renumber nodes so ids follow pre-order DFS (canonical serialized form)."""
    new_of = {}
    order = []
    stack = [root]
    while stack:
        old = stack.pop()
        new_of[old] = len(order)
        order.append(old)
        stack.extend(reversed(arena[old][1]))
    rebuilt = [(arena[old][0], [new_of[c] for c in arena[old][1]]) for old in order]
    return rebuilt, new_of[root]


def parse_function(source: str) -> Ast:
    """Parse one method of the supported subset into an Ast.

    Raises ParseError (with line, column, and lexeme) for anything outside
    the subset, including empty input.
    """
    return _Parser(source).parse_method()
