"""Minimal contract-ABI codec for the calldata shapes the rules consume.

Supports address, uintN, bool, bytesN, dynamic bytes/string, arrays and
(nested) tuples with standard head/tail layout. This is deliberately not a
general-purpose ABI library: decoding is total (malformed bytes raise
AbiDecodeError, never crash) and only the types used by the shipped
adapters are exercised.
"""

from __future__ import annotations

from dataclasses import dataclass

from .model import Address

WORD = 32


class AbiDecodeError(ValueError):
    """Input bytes do not match the expected ABI layout."""


class AbiEncodeError(ValueError):
    """Value cannot be encoded under the given ABI type."""


@dataclass(frozen=True)
class AbiType:
    kind: str  # "uint" | "bool" | "address" | "bytesN" | "bytes" | "string" | "array" | "tuple"
    bits: int = 0  # uintN width or bytesN length
    inner: "AbiType | None" = None  # array element
    length: int = -1  # fixed array length, -1 = dynamic
    children: tuple["AbiType", ...] = ()

    @property
    def is_dynamic(self) -> bool:
        if self.kind in ("bytes", "string"):
            return True
        if self.kind == "array":
            return self.length < 0 or self.inner.is_dynamic
        if self.kind == "tuple":
            return any(c.is_dynamic for c in self.children)
        return False

    @property
    def head_size(self) -> int:
        """Bytes this type occupies in the head section."""
        if self.is_dynamic:
            return WORD
        if self.kind == "tuple":
            return sum(c.head_size for c in self.children)
        if self.kind == "array":
            return self.length * self.inner.head_size
        return WORD


def parse_type(text: str) -> AbiType:
    """Parse a canonical type string such as `(uint16,address)[]`."""
    text = text.strip()
    if text.endswith("]"):
        open_idx = text.rindex("[")
        inner = parse_type(text[:open_idx])
        dims = text[open_idx + 1 : -1]
        length = -1 if dims == "" else int(dims)
        return AbiType(kind="array", inner=inner, length=length)
    if text.startswith("("):
        if not text.endswith(")"):
            raise ValueError(f"unbalanced tuple type: {text}")
        return AbiType(kind="tuple", children=tuple(parse_type(p) for p in _split_tuple(text[1:-1])))
    if text == "address":
        return AbiType(kind="address")
    if text == "bool":
        return AbiType(kind="bool")
    if text == "bytes":
        return AbiType(kind="bytes")
    if text == "string":
        return AbiType(kind="string")
    if text.startswith("uint"):
        bits = int(text[4:] or 256)
        if bits % 8 or not 8 <= bits <= 256:
            raise ValueError(f"bad uint width: {text}")
        return AbiType(kind="uint", bits=bits)
    if text.startswith("bytes"):
        n = int(text[5:])
        if not 1 <= n <= 32:
            raise ValueError(f"bad bytesN length: {text}")
        return AbiType(kind="bytesN", bits=n)
    raise ValueError(f"unsupported ABI type: {text}")


def _split_tuple(body: str) -> list[str]:
    parts, depth, start = [], 0, 0
    for i, ch in enumerate(body):
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        elif ch == "," and depth == 0:
            parts.append(body[start:i])
            start = i + 1
    if body:
        parts.append(body[start:])
    return parts


# ---------------------------------------------------------------------------
# encoding


def encode(types: list[str] | tuple[str, ...], values: tuple | list) -> bytes:
    """Encode positional `values` against canonical type strings."""
    parsed = [parse_type(t) for t in types]
    return _encode_tuple(AbiType(kind="tuple", children=tuple(parsed)), tuple(values))


def encode_call(selector: bytes, types: list[str], values: tuple | list) -> bytes:
    return selector + encode(types, values)


def _encode_tuple(t: AbiType, values: tuple) -> bytes:
    if len(values) != len(t.children):
        raise AbiEncodeError(f"expected {len(t.children)} values, got {len(values)}")
    head, tail = b"", b""
    head_size = sum(c.head_size for c in t.children)
    for child, value in zip(t.children, values):
        if child.is_dynamic:
            head += (head_size + len(tail)).to_bytes(WORD, "big")
            tail += _encode_value(child, value)
        else:
            head += _encode_value(child, value)
    return head + tail


def _encode_value(t: AbiType, value) -> bytes:
    if t.kind == "uint":
        v = int(value)
        if not 0 <= v < (1 << t.bits):
            raise AbiEncodeError(f"uint{t.bits} out of range: {v}")
        return v.to_bytes(WORD, "big")
    if t.kind == "bool":
        return (1 if value else 0).to_bytes(WORD, "big")
    if t.kind == "address":
        raw = value.raw if isinstance(value, Address) else bytes(value)
        if len(raw) != 20:
            raise AbiEncodeError("address must be 20 bytes")
        return raw.rjust(WORD, b"\x00")
    if t.kind == "bytesN":
        raw = bytes(value)
        if len(raw) != t.bits:
            raise AbiEncodeError(f"bytes{t.bits} needs exactly {t.bits} bytes")
        return raw.ljust(WORD, b"\x00")
    if t.kind in ("bytes", "string"):
        raw = value.encode() if isinstance(value, str) else bytes(value)
        padded = raw.ljust(-(-len(raw) // WORD) * WORD, b"\x00")
        return len(raw).to_bytes(WORD, "big") + padded
    if t.kind == "array":
        items = list(value)
        if t.length >= 0 and len(items) != t.length:
            raise AbiEncodeError(f"fixed array needs {t.length} items, got {len(items)}")
        body = _encode_tuple(
            AbiType(kind="tuple", children=tuple(t.inner for _ in items)), tuple(items)
        )
        if t.length < 0:
            return len(items).to_bytes(WORD, "big") + body
        return body
    if t.kind == "tuple":
        return _encode_tuple(t, tuple(value))
    raise AbiEncodeError(f"cannot encode kind {t.kind}")


# ---------------------------------------------------------------------------
# decoding


def decode(types: list[str] | tuple[str, ...], data: bytes) -> tuple:
    """Decode `data` against canonical type strings; strict on bounds."""
    parsed = tuple(parse_type(t) for t in types)
    return _decode_tuple(AbiType(kind="tuple", children=parsed), data, 0)


def decode_call_args(types: list[str], calldata: bytes) -> tuple:
    """Decode calldata arguments (bytes after the 4-byte selector)."""
    if len(calldata) < 4:
        raise AbiDecodeError("calldata shorter than a selector")
    return decode(types, calldata[4:])


def _word(data: bytes, offset: int) -> bytes:
    if offset + WORD > len(data):
        raise AbiDecodeError(f"truncated word at offset {offset}")
    return data[offset : offset + WORD]


def _decode_tuple(t: AbiType, data: bytes, base: int) -> tuple:
    out = []
    cursor = base
    for child in t.children:
        if child.is_dynamic:
            rel = int.from_bytes(_word(data, cursor), "big")
            if rel > len(data):
                raise AbiDecodeError(f"dynamic offset {rel} out of range")
            out.append(_decode_value(child, data, base + rel))
            cursor += WORD
        else:
            out.append(_decode_value(child, data, cursor))
            cursor += child.head_size
    return tuple(out)


def _decode_value(t: AbiType, data: bytes, offset: int):
    if t.kind == "uint":
        v = int.from_bytes(_word(data, offset), "big")
        if v >= (1 << t.bits):
            raise AbiDecodeError(f"uint{t.bits} value out of range")
        return v
    if t.kind == "bool":
        v = int.from_bytes(_word(data, offset), "big")
        if v not in (0, 1):
            raise AbiDecodeError("bool word not 0 or 1")
        return bool(v)
    if t.kind == "address":
        w = _word(data, offset)
        if any(w[:12]):
            raise AbiDecodeError("address word has dirty upper bytes")
        return Address(w[12:])
    if t.kind == "bytesN":
        return _word(data, offset)[: t.bits]
    if t.kind in ("bytes", "string"):
        size = int.from_bytes(_word(data, offset), "big")
        start = offset + WORD
        if start + size > len(data):
            raise AbiDecodeError("dynamic payload exceeds calldata")
        raw = data[start : start + size]
        if t.kind == "string":
            try:
                return raw.decode()
            except UnicodeDecodeError as exc:
                raise AbiDecodeError("invalid utf-8 in string") from exc
        return raw
    if t.kind == "array":
        if t.length < 0:
            count = int.from_bytes(_word(data, offset), "big")
            if count > 2**20:
                raise AbiDecodeError(f"implausible array length {count}")
            offset += WORD
        else:
            count = t.length
        synthetic = AbiType(kind="tuple", children=tuple(t.inner for _ in range(count)))
        return list(_decode_tuple(synthetic, data, offset))
    if t.kind == "tuple":
        return _decode_tuple(t, data, offset)
    raise AbiDecodeError(f"cannot decode kind {t.kind}")
