"""802.11a preamble synthesis and per-emitter hardware impairments.

All waveforms are complex baseband at 20 MS/s.  The preamble is built from
the standard short/long training symbols: 10 repetitions of the 16-sample
STS, a 32-sample double guard interval, and two 64-sample LTS.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

STANDARD_RATE = 20e6
FFT_SIZE = 64
STS_LEN = 16          # 0.8 us at 20 MS/s
PREAMBLE_LEN = 320    # 10*16 + 32 + 2*64

# Short training symbol subcarriers: 12 occupied bins at multiples of 4,
# scaled so STS and LTS carry equal average power.
_STS_BINS = {
    -24: 1 + 1j, -20: -1 - 1j, -16: 1 + 1j, -12: -1 - 1j, -8: -1 - 1j,
    -4: 1 + 1j, 4: -1 - 1j, 8: -1 - 1j, 12: 1 + 1j, 16: 1 + 1j,
    20: 1 + 1j, 24: 1 + 1j,
}
_STS_SCALE = np.sqrt(13.0 / 6.0)

_LTS_LOWER = [1, 1, -1, -1, 1, 1, -1, 1, -1, 1, 1, 1, 1, 1, 1, -1, -1, 1,
              1, -1, 1, -1, 1, 1, 1, 1]
_LTS_UPPER = [1, -1, -1, 1, 1, -1, 1, -1, 1, -1, -1, -1, -1, -1, 1, 1, -1,
              -1, 1, -1, 1, -1, 1, 1, 1, 1]


@dataclass
class ComplexBaseband:
    """A complex baseband waveform with its sample rate in Hz."""

    samples: np.ndarray
    sample_rate: float

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.complex128)
        if self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        if self.samples.size == 0:
            raise ValueError("signal must contain at least one sample")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("signal contains non-finite samples")

    def __len__(self):
        return self.samples.size

    def mean_power(self) -> float:
        return float(np.mean(np.abs(self.samples) ** 2))


def lts_frequency_reference() -> np.ndarray:
    """Known LTS symbol over the 64 subcarrier bins (52 entries of +-1)."""
    ref = np.zeros(FFT_SIZE, dtype=np.complex128)
    ref[1:27] = _LTS_UPPER
    ref[-26:] = _LTS_LOWER
    return ref


def _sts_symbol() -> np.ndarray:
    bins = np.zeros(FFT_SIZE, dtype=np.complex128)
    for k, v in _STS_BINS.items():
        bins[k % FFT_SIZE] = _STS_SCALE * v
    # occupied bins are multiples of 4, so the 64-sample IFFT is 16-periodic
    return np.fft.ifft(bins)[:STS_LEN]


def generate_preamble(sample_rate: float = STANDARD_RATE) -> ComplexBaseband:
    """Standard 802.11a preamble: 10 STS, double guard interval, 2 LTS.

    Deterministic; only the 20 MS/s rate is supported.
    """
    if sample_rate != STANDARD_RATE:
        raise ValueError(f"unsupported sample rate {sample_rate}; only 20 MS/s is supported")
    sts = _sts_symbol()
    lts = np.fft.ifft(lts_frequency_reference())
    samples = np.concatenate([np.tile(sts, 10), lts[-32:], lts, lts])
    return ComplexBaseband(samples, sample_rate)


@dataclass
class EmitterProfile:
    """Hardware coloration of one transmitter's RF chain.

    pa_coefficients are the odd-order memoryless polynomial terms
    (a1, a3, a5) applied as y = a1*u + a3*u*|u|^2 + a5*u*|u|^4.
    The identity profile (a1=1, everything else 0) leaves signals untouched.
    """

    id: str
    iq_gain_imbalance_db: float = 0.0
    iq_phase_imbalance_deg: float = 0.0
    pa_coefficients: tuple = (1.0 + 0j, 0j, 0j)
    residual_cfo_hz: float = 0.0
    dc_offset: complex = 0j

    def __post_init__(self):
        fields = [self.iq_gain_imbalance_db, self.iq_phase_imbalance_deg,
                  self.residual_cfo_hz, self.dc_offset, *self.pa_coefficients]
        if not all(np.isfinite(v) for v in fields):
            raise ValueError(f"profile {self.id!r} has non-finite fields")
        if len(self.pa_coefficients) != 3:
            raise ValueError("pa_coefficients must be (a1, a3, a5)")
        if abs(self.pa_coefficients[0]) == 0:
            raise ValueError("linear PA coefficient a1 must be nonzero")
        if abs(self.residual_cfo_hz) > STANDARD_RATE / 100:
            raise ValueError(f"residual CFO {self.residual_cfo_hz} Hz exceeds +-{STANDARD_RATE / 100:.0f} Hz")

    def is_identity(self) -> bool:
        a1, a3, a5 = self.pa_coefficients
        return (self.iq_gain_imbalance_db == 0 and self.iq_phase_imbalance_deg == 0
                and a1 == 1 and a3 == 0 and a5 == 0
                and self.residual_cfo_hz == 0 and self.dc_offset == 0)


def identity_profile(profile_id: str = "ideal") -> EmitterProfile:
    return EmitterProfile(id=profile_id)


def apply_emitter(profile: EmitterProfile, s: ComplexBaseband) -> ComplexBaseband:
    """Run a waveform through one emitter's impairment chain.

    Order matches the physical chain: IQ modulator skew, PA polynomial,
    oscillator offset rotation, DC offset.
    """
    u = s.samples
    if profile.is_identity():
        return ComplexBaseband(u.copy(), s.sample_rate)

    # IQ imbalance: gain split across rails, phase error rotating Q toward I
    g = 10.0 ** (profile.iq_gain_imbalance_db / 40.0)
    phi = np.deg2rad(profile.iq_phase_imbalance_deg)
    i_rail = g * u.real
    q_rail = (u.imag * np.cos(phi) + u.real * np.sin(phi)) / g
    u = i_rail + 1j * q_rail

    a1, a3, a5 = profile.pa_coefficients
    mag2 = np.abs(u) ** 2
    u = a1 * u + a3 * u * mag2 + a5 * u * mag2 ** 2

    if profile.residual_cfo_hz != 0.0:
        m = np.arange(u.size)
        u = u * np.exp(2j * np.pi * profile.residual_cfo_hz * m / s.sample_rate)

    u = u + profile.dc_offset
    return ComplexBaseband(u, s.sample_rate)


# Reference population: four radios with distinct dominant impairments.
# PA terms are sized for the preamble's ~0.11 rms amplitude so the cubic
# term perturbs the waveform at the percent level; residual CFO is what
# remains after the capture chain's coarse CFO correction (tens of Hz).
REFERENCE_RADIOS = (
    EmitterProfile("radio1", iq_gain_imbalance_db=2.0, iq_phase_imbalance_deg=3.0,
                   pa_coefficients=(1.0, 1.0 * np.exp(0.2j), 0j),
                   residual_cfo_hz=40.0, dc_offset=0.008 * np.exp(0.35j)),
    EmitterProfile("radio2", iq_gain_imbalance_db=-1.5, iq_phase_imbalance_deg=-2.0,
                   pa_coefficients=(1.0, 2.5 * np.exp(-0.3j), -15.0 + 0j),
                   residual_cfo_hz=-55.0, dc_offset=0.016 * np.exp(-0.7j)),
    EmitterProfile("radio3", iq_gain_imbalance_db=0.5, iq_phase_imbalance_deg=4.0,
                   pa_coefficients=(1.0, 4.0 * np.exp(0.5j), 25.0 + 0j),
                   residual_cfo_hz=25.0, dc_offset=0.024 * np.exp(2.6j)),
    EmitterProfile("radio4", iq_gain_imbalance_db=-0.8, iq_phase_imbalance_deg=-5.0,
                   pa_coefficients=(1.0, 5.5 * np.exp(-0.1j), -35.0 + 0j),
                   residual_cfo_hz=-30.0, dc_offset=0.032 * np.exp(1.25j)),
)


def emitter_profile_from_mapping(profile_id: str, mapping) -> EmitterProfile:
    """Build a profile from a key=value config section (all keys optional)."""
    def fget(key, default=0.0):
        return float(mapping[key]) if key in mapping else default

    def cget(key, default=0j):
        return complex(mapping[key].replace(" ", "")) if key in mapping else default

    return EmitterProfile(
        id=profile_id,
        iq_gain_imbalance_db=fget("iq_gain_imbalance_db"),
        iq_phase_imbalance_deg=fget("iq_phase_imbalance_deg"),
        pa_coefficients=(cget("pa_a1", 1.0 + 0j), cget("pa_a3"), cget("pa_a5")),
        residual_cfo_hz=fget("residual_cfo_hz"),
        dc_offset=cget("dc_offset"),
    )


_DUMP_MAGIC = "RFDNA1"


def write_signal(path, s: ComplexBaseband) -> None:
    """Dump a waveform: ASCII header line, then interleaved float32 LE I/Q."""
    with open(path, "wb") as fh:
        fh.write(f"{_DUMP_MAGIC} {s.sample_rate:.0f} {len(s)}\n".encode("ascii"))
        interleaved = np.empty(2 * len(s), dtype="<f4")
        interleaved[0::2] = s.samples.real
        interleaved[1::2] = s.samples.imag
        fh.write(interleaved.tobytes())


def read_signal(path) -> ComplexBaseband:
    with open(path, "rb") as fh:
        header = fh.readline().decode("ascii").split()
        if len(header) != 3 or header[0] != _DUMP_MAGIC:
            raise ValueError(f"{path}: not a {_DUMP_MAGIC} signal dump")
        rate, n = float(header[1]), int(header[2])
        raw = np.frombuffer(fh.read(8 * n), dtype="<f4")
        if raw.size != 2 * n:
            raise ValueError(f"{path}: truncated signal dump")
    samples = raw[0::2].astype(np.float64) + 1j * raw[1::2].astype(np.float64)
    return ComplexBaseband(samples, rate)
