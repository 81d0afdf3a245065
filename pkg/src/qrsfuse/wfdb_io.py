"""Reading (and minimal writing) of WFDB records.

Supports single-segment headers whose signals are stored in format 212 or
format 16, and MIT-format annotation files.  Writers exist for format 16
signals and annotations so synthetic records can go through the same
ingestion path as real ones.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

DEFAULT_GAIN = 200.0

# MIT annotation codes (ecgcodes.h)
NOTQRS = 0
NORMAL, LBBB, RBBB, ABERR, PVC, FUSION, NPC, APC = 1, 2, 3, 4, 5, 6, 7, 8
SVPB, VESC, NESC, PACE, UNKNOWN = 9, 10, 11, 12, 13
NOISE, RHYTHM, NOTE = 14, 28, 22
BBB, LEARN, AESC, SVESC, NAPC, PFUS, RONT = 25, 30, 34, 35, 37, 38, 41

SKIP, NUM, SUB, CHN, AUX = 59, 60, 61, 62, 63

# Codes counted as beats by the comparator; everything else is dropped.
QRS_CODES = frozenset({
    NORMAL, LBBB, RBBB, ABERR, PVC, FUSION, NPC, APC, SVPB, VESC, NESC,
    PACE, UNKNOWN, BBB, LEARN, AESC, SVESC, NAPC, PFUS, RONT,
})

SUPPORTED_FORMATS = (212, 16)


class WfdbError(Exception):
    pass


class ParseError(WfdbError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class UnsupportedFormat(WfdbError):
    pass


class TruncatedSignal(WfdbError):
    pass


class InvalidHeader(WfdbError):
    pass


@dataclass(frozen=True)
class SignalSpec:
    file_name: str
    storage_format: int
    adc_gain: float = DEFAULT_GAIN
    baseline: int = 0
    units: str = "mV"
    adc_resolution: int = 0
    adc_zero: int = 0
    initial_value: int = 0
    checksum: int = 0
    block_size: int = 0
    description: str = ""
    byte_offset: int = 0


@dataclass(frozen=True)
class RecordHeader:
    record_name: str
    num_signals: int
    sampling_rate: float
    num_samples: int
    signals: tuple[SignalSpec, ...] = ()

    def __post_init__(self):
        if self.num_signals < 1:
            raise InvalidHeader("num_signals must be >= 1")
        if not self.sampling_rate > 0:
            raise InvalidHeader("sampling_rate must be positive")
        if len(self.signals) != self.num_signals:
            raise InvalidHeader(
                f"{self.num_signals} signals declared, {len(self.signals)} specified")
        for s in self.signals:
            if s.storage_format not in SUPPORTED_FORMATS:
                raise UnsupportedFormat(f"format {s.storage_format}")

    @property
    def lead_names(self):
        return [s.description for s in self.signals]


@dataclass(frozen=True)
class EcgRecord:
    header: RecordHeader
    samples: np.ndarray = field(repr=False)   # (num_signals, num_samples), mV

    def __post_init__(self):
        h = self.header
        if self.samples.shape != (h.num_signals, h.num_samples):
            raise InvalidHeader(
                f"samples shape {self.samples.shape} does not match header "
                f"({h.num_signals}, {h.num_samples})")
        if not np.all(np.isfinite(self.samples)):
            raise InvalidHeader("non-finite sample values")
        self.samples.setflags(write=False)

    @property
    def fs(self):
        return self.header.sampling_rate

    @property
    def lead_names(self):
        return self.header.lead_names


@dataclass(frozen=True)
class Annotation:
    sample_index: int
    beat_code: int


class AnnotationList(tuple):
    """Ordered beat annotations (a tuple of :class:`Annotation`)."""

    @property
    def samples(self):
        return np.array([a.sample_index for a in self], dtype=np.int64)

    @property
    def codes(self):
        return np.array([a.beat_code for a in self], dtype=np.int64)


# ---------------------------------------------------------------- header

def _parse_format_field(token, lineno):
    # e.g. "212", "16+512", "212x2:3" -- sample multiplicity and skew unsupported
    fmt, _, offset = token.partition("+")
    if "x" in fmt or ":" in fmt:
        raise UnsupportedFormat(f"line {lineno}: sample multiplicity/skew in {token!r}")
    try:
        code = int(fmt)
        byte_offset = int(offset) if offset else 0
    except ValueError:
        raise ParseError(f"bad format field {token!r}", lineno) from None
    if code not in SUPPORTED_FORMATS:
        raise UnsupportedFormat(f"line {lineno}: format {code} not supported")
    return code, byte_offset


def _parse_gain_field(token, lineno):
    # "gain[(baseline)][/units]"
    units = "mV"
    if "/" in token:
        token, units = token.split("/", 1)
    baseline = None
    if "(" in token:
        if not token.endswith(")"):
            raise ParseError(f"bad gain field {token!r}", lineno)
        token, base = token[:-1].split("(", 1)
        try:
            baseline = int(base)
        except ValueError:
            raise ParseError(f"bad baseline {base!r}", lineno) from None
    try:
        gain = float(token)
    except ValueError:
        raise ParseError(f"bad gain {token!r}", lineno) from None
    return gain, baseline, units


def parse_header(text):
    """Parse the text of a ``.hea`` file into a :class:`RecordHeader`.

    Missing gain (or gain 0) falls back to 200 adu/mV; a missing baseline
    falls back to the ADC zero, which itself defaults to 0.
    """
    lines = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            lines.append((lineno, line))
    if not lines:
        raise ParseError("empty header", 1)

    lineno, record_line = lines[0]
    parts = record_line.split()
    if len(parts) < 2:
        raise ParseError("record line needs at least name and signal count", lineno)
    name = parts[0]
    if "/" in name:
        raise UnsupportedFormat(f"line {lineno}: multi-segment records are not supported")
    try:
        nsig = int(parts[1])
        fs = float(parts[2].split("/")[0].split("(")[0]) if len(parts) > 2 else 250.0
        nsamp = int(parts[3]) if len(parts) > 3 else 0
    except ValueError:
        raise ParseError(f"malformed record line {record_line!r}", lineno) from None
    if nsig < 1:
        raise ParseError("signal count must be >= 1", lineno)
    if not fs > 0:
        raise ParseError("sampling frequency must be positive", lineno)

    if len(lines) - 1 < nsig:
        raise ParseError(f"expected {nsig} signal lines, found {len(lines) - 1}",
                         lines[-1][0])
    signals = []
    for lineno, line in lines[1:nsig + 1]:
        tok = line.split(None, 8)
        if len(tok) < 2:
            raise ParseError("signal line needs file name and format", lineno)
        fmt, offset = _parse_format_field(tok[1], lineno)
        gain, baseline, units = DEFAULT_GAIN, None, "mV"
        if len(tok) > 2:
            gain, baseline, units = _parse_gain_field(tok[2], lineno)
        if gain == 0:
            gain = DEFAULT_GAIN
        try:
            ints = [int(t) for t in tok[3:8]]
        except ValueError:
            raise ParseError(f"malformed signal line {line!r}", lineno) from None
        ints += [0] * (5 - len(ints))
        adcres, adczero, initval, checksum, blocksize = ints
        signals.append(SignalSpec(
            file_name=tok[0], storage_format=fmt, adc_gain=gain,
            baseline=adczero if baseline is None else baseline, units=units,
            adc_resolution=adcres, adc_zero=adczero, initial_value=initval,
            checksum=checksum, block_size=blocksize,
            description=tok[8].strip() if len(tok) > 8 else "",
            byte_offset=offset))
    return RecordHeader(name, nsig, fs, nsamp, tuple(signals))


def format_header(header):
    """Inverse of :func:`parse_header` (fields that round-trip only)."""
    fs = f"{header.sampling_rate:g}"
    out = [f"{header.record_name} {header.num_signals} {fs} {header.num_samples}"]
    for s in header.signals:
        fmt = f"{s.storage_format}" + (f"+{s.byte_offset}" if s.byte_offset else "")
        out.append(
            f"{s.file_name} {fmt} {s.adc_gain:g}({s.baseline})/{s.units} "
            f"{s.adc_resolution} {s.adc_zero} {s.initial_value} {s.checksum} "
            f"{s.block_size} {s.description}".rstrip())
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------- signals

def decode_signal_212(data, num_signals, num_samples):
    """Decode format-212 bytes into an ``(num_signals, num_samples)`` int array.

    Every 3 bytes carry two 12-bit two's-complement samples: the first is
    byte0 plus the low nibble of byte1 as bits 8-11, the second is byte2 plus
    the high nibble of byte1.  Samples are interleaved frame by frame.
    """
    total = num_signals * num_samples
    need = (3 * total + 1) // 2
    buf = np.frombuffer(bytes(data), dtype=np.uint8)
    if buf.size < need:
        raise TruncatedSignal(f"format 212 needs {need} bytes, got {buf.size}")
    buf = buf[:need]
    if buf.size % 3:
        buf = np.concatenate([buf, np.zeros(3 - buf.size % 3, dtype=np.uint8)])
    triples = buf.reshape(-1, 3).astype(np.int32)
    out = np.empty((triples.shape[0], 2), dtype=np.int32)
    out[:, 0] = triples[:, 0] | ((triples[:, 1] & 0x0F) << 8)
    out[:, 1] = triples[:, 2] | ((triples[:, 1] & 0xF0) << 4)
    flat = out.ravel()[:total]
    flat = np.where(flat >= 2048, flat - 4096, flat)
    return flat.reshape(num_samples, num_signals).T.copy()


def decode_signal_16(data, num_signals, num_samples):
    """Decode little-endian signed 16-bit interleaved samples."""
    raw = bytes(data)
    if len(raw) % 2:
        raise TruncatedSignal("format 16 payload has an odd number of bytes")
    need = 2 * num_signals * num_samples
    if len(raw) < need:
        raise TruncatedSignal(f"format 16 needs {need} bytes, got {len(raw)}")
    flat = np.frombuffer(raw[:need], dtype="<i2").astype(np.int32)
    return flat.reshape(num_samples, num_signals).T.copy()


def encode_signal_16(adc):
    """Pack an ``(num_signals, num_samples)`` int array as format 16."""
    adc = np.asarray(adc)
    if adc.min(initial=0) < -32768 or adc.max(initial=0) > 32767:
        raise ValueError("ADC values outside the 16-bit range")
    return adc.T.astype("<i2").tobytes()


_DECODERS = {212: decode_signal_212, 16: decode_signal_16}


def to_physical(adc, header):
    """Convert ADC units to mV per signal: ``(adc - baseline) / gain``."""
    adc = np.asarray(adc)
    gains = np.array([s.adc_gain for s in header.signals], dtype=float)
    if np.any(gains == 0):
        raise InvalidHeader("ADC gain of zero")
    base = np.array([s.baseline for s in header.signals], dtype=float)
    mv = (adc - base[:, None]) / gains[:, None]
    return EcgRecord(header, mv)


def from_physical(mv, header):
    """Inverse of :func:`to_physical`, rounded to integer ADC units."""
    gains = np.array([s.adc_gain for s in header.signals], dtype=float)
    base = np.array([s.baseline for s in header.signals], dtype=float)
    return np.rint(np.asarray(mv) * gains[:, None] + base[:, None]).astype(np.int32)


def read_record(path):
    """Read ``<path>.hea`` and its signal file(s) into an :class:`EcgRecord`.

    ``path`` is the record path without extension.
    """
    path = os.fspath(path)
    if path.endswith(".hea"):
        path = path[:-4]
    with open(path + ".hea", encoding="latin-1") as fh:
        header = parse_header(fh.read())
    directory = os.path.dirname(path)

    # group signals by file, keeping file order of first appearance
    groups = {}
    for i, s in enumerate(header.signals):
        groups.setdefault(s.file_name, []).append(i)
    adc = np.zeros((header.num_signals, header.num_samples), dtype=np.int32)
    for fname, idx in groups.items():
        specs = [header.signals[i] for i in idx]
        fmt = specs[0].storage_format
        if any(s.storage_format != fmt for s in specs):
            raise UnsupportedFormat(f"mixed formats in {fname}")
        with open(os.path.join(directory, fname), "rb") as fh:
            fh.seek(specs[0].byte_offset)
            data = fh.read()
        adc[idx] = _DECODERS[fmt](data, len(idx), header.num_samples)
    return to_physical(adc, header)


def write_record(path, record, adc=None):
    """Write a format-16 record (``.hea`` + ``.dat``) next to ``path``."""
    path = os.fspath(path)
    header = record.header
    if any(s.storage_format != 16 for s in header.signals):
        raise UnsupportedFormat("only format 16 can be written")
    if adc is None:
        adc = from_physical(record.samples, header)
    directory = os.path.dirname(path)
    files = {s.file_name for s in header.signals}
    if len(files) != 1:
        raise UnsupportedFormat("writer expects every signal in one file")
    with open(os.path.join(directory, files.pop()), "wb") as fh:
        fh.write(encode_signal_16(adc))
    with open(path + ".hea", "w") as fh:
        fh.write(format_header(header))


# ------------------------------------------------------------ annotations

def _iter_annotation_words(data):
    raw = bytes(data)
    if len(raw) % 2:
        raise ParseError("annotation stream has an odd number of bytes")
    words = np.frombuffer(raw, dtype="<u2")
    return words


def parse_annotations(data, keep=QRS_CODES):
    """Decode an MIT-format annotation stream.

    Each annotation starts with a 16-bit little-endian word whose top 6 bits
    are the type code and low 10 bits the time increment.  SKIP carries a
    32-bit increment in the following two words (high word first); NUM, SUB,
    CHN and AUX attach to the preceding annotation.  A zero word ends the
    stream.

    Only codes in ``keep`` are returned (pass ``None`` to keep everything).
    """
    words = _iter_annotation_words(data)
    n = len(words)
    out = []
    t = 0
    i = 0
    terminated = False
    while i < n:
        w = int(words[i])
        code, value = w >> 10, w & 0x3FF
        if code == 0 and value == 0:
            terminated = True
            break
        if code == SKIP:
            if i + 2 >= n:
                raise ParseError("SKIP annotation truncated")
            interval = (int(words[i + 1]) << 16) | int(words[i + 2])
            if interval >= 1 << 31:
                interval -= 1 << 32
            t += interval
            i += 3
        elif code == AUX:
            i += 1 + (value + 1) // 2
        elif code in (NUM, SUB, CHN):
            i += 1
        else:
            t += value
            if keep is None or code in keep:
                out.append((t, code))
            i += 1
    if not terminated:
        raise ParseError("annotation stream is not terminated by a zero word")

    anns = []
    last = None
    for t, code in out:
        if last is not None and t <= last:
            if t == last:
                continue
            raise ParseError(f"annotation times not increasing at sample {t}")
        anns.append(Annotation(t, code))
        last = t
    return AnnotationList(anns)


def encode_annotations(entries):
    """Encode ``[(sample_index, code), ...]`` as an MIT annotation stream."""
    words = []
    t = 0
    for sample, code in entries:
        if not 0 < code < SKIP:
            raise ValueError(f"annotation code {code} out of range")
        delta = int(sample) - t
        if delta < 0:
            raise ValueError("annotation samples must be non-decreasing")
        if delta > 0x3FF:
            words += [SKIP << 10, (delta >> 16) & 0xFFFF, delta & 0xFFFF]
            delta = 0
        words.append((code << 10) | delta)
        t = int(sample)
    words.append(0)
    return np.array(words, dtype="<u2").tobytes()


def read_annotations(path, extension="atr"):
    path = os.fspath(path)
    with open(f"{path}.{extension}", "rb") as fh:
        return parse_annotations(fh.read())


def write_annotations(path, samples, extension="atr", code=NORMAL):
    with open(f"{os.fspath(path)}.{extension}", "wb") as fh:
        fh.write(encode_annotations([(int(s), code) for s in samples]))
