"""Minimal Portable Executable parser.

Only what the feature extractor needs is read: the fixed-width integer fields
of the DOS, COFF and optional headers, four numeric fields per section, the
import directory and the compile timestamp. Parsing never raises on bad
input; a structure that runs past the end of the buffer stops the walk and
sets the ``parse_truncated`` field to 1.

References:
    Microsoft, "PE Format", learn.microsoft.com/windows/win32/debug/pe-format
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field

PE32_MAGIC = 0x10B
PE32PLUS_MAGIC = 0x20B

MAX_SECTIONS = 96
MAX_DESCRIPTORS = 4096
MAX_THUNKS = 65536
MAX_NAME = 512
MAX_IMPORTS = 100_000

# (name, struct code); reserved arrays e_res/e_res2 are skipped
_DOS_FIELDS = [
    ("e_magic", "H"), ("e_cblp", "H"), ("e_cp", "H"), ("e_crlc", "H"),
    ("e_cparhdr", "H"), ("e_minalloc", "H"), ("e_maxalloc", "H"), ("e_ss", "H"),
    ("e_sp", "H"), ("e_csum", "H"), ("e_ip", "H"), ("e_cs", "H"),
    ("e_lfarlc", "H"), ("e_ovno", "H"), (None, "8x"), ("e_oemid", "H"),
    ("e_oeminfo", "H"), (None, "20x"), ("e_lfanew", "I"),
]

_COFF_FIELDS = [
    ("Machine", "H"), ("NumberOfSections", "H"), ("compile_timestamp", "I"),
    ("PointerToSymbolTable", "I"), ("NumberOfSymbols", "I"),
    ("SizeOfOptionalHeader", "H"), ("Characteristics", "H"),
]


def _optional_fields(pe64):
    word = "Q" if pe64 else "I"
    fields = [
        ("Magic", "H"), ("MajorLinkerVersion", "B"), ("MinorLinkerVersion", "B"),
        ("SizeOfCode", "I"), ("SizeOfInitializedData", "I"),
        ("SizeOfUninitializedData", "I"), ("AddressOfEntryPoint", "I"),
        ("BaseOfCode", "I"),
    ]
    if not pe64:
        fields.append(("BaseOfData", "I"))
    fields += [
        ("ImageBase", word), ("SectionAlignment", "I"), ("FileAlignment", "I"),
        ("MajorOperatingSystemVersion", "H"), ("MinorOperatingSystemVersion", "H"),
        ("MajorImageVersion", "H"), ("MinorImageVersion", "H"),
        ("MajorSubsystemVersion", "H"), ("MinorSubsystemVersion", "H"),
        ("Win32VersionValue", "I"), ("SizeOfImage", "I"), ("SizeOfHeaders", "I"),
        ("CheckSum", "I"), ("Subsystem", "H"), ("DllCharacteristics", "H"),
        ("SizeOfStackReserve", word), ("SizeOfStackCommit", word),
        ("SizeOfHeapReserve", word), ("SizeOfHeapCommit", word),
        ("LoaderFlags", "I"), ("NumberOfRvaAndSizes", "I"),
    ]
    return fields


DATA_DIRECTORY_NAMES = [
    "EXPORT", "IMPORT", "RESOURCE", "EXCEPTION", "SECURITY", "BASERELOC",
    "DEBUG", "ARCHITECTURE", "GLOBALPTR", "TLS", "LOAD_CONFIG", "BOUND_IMPORT",
    "IAT", "DELAY_IMPORT", "COM_DESCRIPTOR", "RESERVED",
]


@dataclass(frozen=True)
class PeSummary:
    """Parsed view of one executable.

    ``numeric_fields`` always ends with ``("parse_truncated", 0|1)``.
    ``compile_timestamp`` is None when ``is_pe`` is false.
    """

    numeric_fields: list[tuple[str, int]] = field(default_factory=list)
    imports: list[tuple[str, str]] = field(default_factory=list)
    compile_timestamp: int | None = None
    is_pe: bool = False

    @property
    def truncated(self) -> bool:
        return bool(self.numeric_fields and dict(self.numeric_fields).get("parse_truncated"))


class _Truncated(Exception):
    pass


class _Reader:
    def __init__(self, data: bytes):
        self.data = data

    def unpack(self, layout, offset):
        fmt = "<" + "".join(code for _, code in layout)
        size = struct.calcsize(fmt)
        if offset < 0 or offset + size > len(self.data):
            raise _Truncated
        values = iter(struct.unpack_from(fmt, self.data, offset))
        out = [(name, next(values)) for name, _ in layout if name is not None]
        return out, offset + size

    def u(self, fmt, offset):
        size = struct.calcsize(fmt)
        if offset < 0 or offset + size > len(self.data):
            raise _Truncated
        return struct.unpack_from("<" + fmt, self.data, offset)[0]

    def cstring(self, offset):
        if offset < 0 or offset >= len(self.data):
            raise _Truncated
        end = self.data.find(b"\0", offset, offset + MAX_NAME)
        if end < 0:
            raise _Truncated
        return self.data[offset:end].decode("latin-1")


def parse_pe(raw_bytes: bytes) -> PeSummary:
    """Parse ``raw_bytes`` into a :class:`PeSummary`. Total: never raises.

    ``is_pe`` requires the MZ magic, the ``PE\\0\\0`` signature at
    ``e_lfanew`` and a complete COFF header after it.
    """
    raw_bytes = bytes(raw_bytes)
    rd = _Reader(raw_bytes)
    if raw_bytes[:2] != b"MZ":
        return PeSummary(numeric_fields=[("parse_truncated", 0)])

    try:
        dos, _ = rd.unpack(_DOS_FIELDS, 0)
        e_lfanew = dos[-1][1]
        if raw_bytes[e_lfanew:e_lfanew + 4] != b"PE\0\0":
            truncated = int(e_lfanew + 4 > len(raw_bytes))
            return PeSummary(numeric_fields=[("parse_truncated", truncated)])
        coff, opt_start = rd.unpack(_COFF_FIELDS, e_lfanew + 4)
    except _Truncated:
        return PeSummary(numeric_fields=[("parse_truncated", 1)])

    fields = dos + coff
    coff_d = dict(coff)
    imports: list[tuple[str, str]] = []
    truncated = 0
    try:
        _walk_optional_and_sections(rd, coff_d, opt_start, fields, imports)
    except _Truncated:
        truncated = 1
    fields.append(("parse_truncated", truncated))
    return PeSummary(numeric_fields=fields, imports=imports,
                     compile_timestamp=coff_d["compile_timestamp"], is_pe=True)


def _walk_optional_and_sections(rd, coff, opt_start, fields, imports):
    # appends in place so a late truncation keeps the structures already read
    pe64 = rd.u("H", opt_start) == PE32PLUS_MAGIC
    opt, off = rd.unpack(_optional_fields(pe64), opt_start)
    fields += opt
    opt_d = dict(opt)
    dirs = []
    for i in range(min(opt_d["NumberOfRvaAndSizes"], 16)):
        va, size = rd.u("I", off), rd.u("I", off + 4)
        name = DATA_DIRECTORY_NAMES[i]
        fields += [(f"DataDirectory_{name}_VirtualAddress", va),
                   (f"DataDirectory_{name}_Size", size)]
        dirs.append((va, size))
        off += 8

    sect_off = opt_start + coff["SizeOfOptionalHeader"]
    sections = []
    for i in range(min(coff["NumberOfSections"], MAX_SECTIONS)):
        base = sect_off + 40 * i
        vsize, va, rsize, rptr = (rd.u("I", base + 8 + 4 * k) for k in range(4))
        chars = rd.u("I", base + 36)
        fields += [(f"section{i}_VirtualSize", vsize), (f"section{i}_VirtualAddress", va),
                   (f"section{i}_SizeOfRawData", rsize), (f"section{i}_Characteristics", chars)]
        sections.append((va, vsize, rptr, rsize))

    if len(dirs) > 1 and dirs[1][0]:
        _read_imports(rd, dirs[1][0], sections, opt_d["SizeOfHeaders"], pe64, imports)


def _rva_to_offset(rva, sections, headers_size):
    for va, vsize, rptr, rsize in sections:
        if va <= rva < va + max(vsize, rsize):
            delta = rva - va
            if delta >= rsize:
                raise _Truncated  # lives in zero-fill, not on disk
            return rptr + delta
    if rva < headers_size:
        return rva
    raise _Truncated


def _read_imports(rd, import_rva, sections, headers_size, pe64, imports):
    thunk_fmt, ord_flag = ("Q", 1 << 63) if pe64 else ("I", 1 << 31)
    thunk_size = 8 if pe64 else 4
    desc_off = _rva_to_offset(import_rva, sections, headers_size)
    for _ in range(MAX_DESCRIPTORS):
        ilt, _ts, _fwd, name_rva, iat = (rd.u("I", desc_off + 4 * k) for k in range(5))
        if not (ilt or name_rva or iat):
            return
        desc_off += 20
        dll = rd.cstring(_rva_to_offset(name_rva, sections, headers_size))
        if not dll:
            raise _Truncated
        t_off = _rva_to_offset(ilt or iat, sections, headers_size)
        for _ in range(MAX_THUNKS):
            entry = rd.u(thunk_fmt, t_off)
            if entry == 0:
                break
            if len(imports) >= MAX_IMPORTS:
                raise _Truncated
            if entry & ord_flag:
                imports.append((dll, f"ord{entry & 0xFFFF}"))
            else:
                hint_off = _rva_to_offset(entry & 0x7FFFFFFF, sections, headers_size)
                imports.append((dll, rd.cstring(hint_off + 2)))
            t_off += thunk_size


def extract_imports(pe: PeSummary) -> list[tuple[str, str]]:
    """(dll, function) pairs in on-disk order; empty for non-PE input."""
    if not pe.is_pe:
        return []
    return list(pe.imports)
