"""Physical-layer math for the BLE advertising bearer.

Channel layout, airtime, log-distance path loss with log-normal shadowing,
SINR and packet error rate. Everything here is a pure function.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum, IntEnum

SPEED_OF_LIGHT = 299_792_458.0  # m/s


class AdvChannel(IntEnum):
    CH37 = 37
    CH38 = 38
    CH39 = 39

    @property
    def center_frequency_mhz(self) -> float:
        return _ADV_CENTER_MHZ[self]

    @property
    def wavelength_m(self) -> float:
        return SPEED_OF_LIGHT / (self.center_frequency_mhz * 1e6)

    def successor(self) -> "AdvChannel":
        return ADV_CHANNELS[(ADV_CHANNELS.index(self) + 1) % 3]


_ADV_CENTER_MHZ = {37: 2402.0, 38: 2426.0, 39: 2480.0}
ADV_CHANNELS: tuple[AdvChannel, ...] = (AdvChannel.CH37, AdvChannel.CH38, AdvChannel.CH39)


def ble_center_frequency_mhz(channel: int) -> float:
    """Center frequency of any of the 40 BLE RF channels, by channel index."""
    if channel in _ADV_CENTER_MHZ:
        return _ADV_CENTER_MHZ[channel]
    if 0 <= channel <= 10:
        return 2404.0 + 2.0 * channel
    if 11 <= channel <= 36:
        return 2428.0 + 2.0 * (channel - 11)
    raise ValueError(f"BLE channel index must be in 0..39, got {channel}")


@dataclass(frozen=True)
class RadioParams:
    tx_power_dbm: float = 0.0
    noise_floor_dbm: float = -106.0
    sensitivity_dbm: float = -85.0
    path_loss_exponent: float = 3.5
    shadowing_sigma_db: float = 4.0
    reference_distance_m: float = 1.0
    bit_rate: float = 1e6
    pdu_bits: int = 312
    per_alpha: float = 0.68

    def __post_init__(self) -> None:
        if not self.path_loss_exponent > 0:
            raise ValueError("path_loss_exponent must be > 0")
        if self.shadowing_sigma_db < 0:
            raise ValueError("shadowing_sigma_db must be >= 0")
        if not self.reference_distance_m > 0:
            raise ValueError("reference_distance_m must be > 0")
        if not self.bit_rate > 0:
            raise ValueError("bit_rate must be > 0")
        if not 0 < self.pdu_bits <= 312:
            raise ValueError("pdu_bits must be in (0, 312]")


class PerKind(str, Enum):
    FIXED = "fixed"
    SINR_PUBLISHED = "sinr_published"
    SINR_COMPLEMENT = "sinr_complement"


@dataclass(frozen=True)
class PerMode:
    kind: PerKind = PerKind.FIXED
    per: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", PerKind(self.kind))
        if self.kind is PerKind.FIXED and not 0.0 <= self.per <= 1.0:
            raise ValueError(f"fixed PER must be in [0, 1], got {self.per}")

    @classmethod
    def fixed(cls, per: float) -> "PerMode":
        return cls(PerKind.FIXED, per)

    @property
    def uses_sinr(self) -> bool:
        return self.kind is not PerKind.FIXED


def dbm_to_mw(dbm: float) -> float:
    if dbm == -math.inf:
        return 0.0
    return 10.0 ** (dbm / 10.0)


def mw_to_dbm(mw: float) -> float:
    if mw <= 0.0:
        return -math.inf
    return 10.0 * math.log10(mw)


def airtime(pdu_bits: float, bit_rate: float) -> float:
    """Seconds on air for a PDU of ``pdu_bits`` at ``bit_rate`` bit/s."""
    if pdu_bits <= 0 or bit_rate <= 0:
        raise ValueError("pdu_bits and bit_rate must be positive")
    return pdu_bits / bit_rate


def airtime_us(pdu_bits: int, bit_rate: float) -> int:
    return int(round(airtime(pdu_bits, bit_rate) * 1e6))


def reference_gain_db(params: RadioParams, channel: int) -> float:
    """Free-space gain at the reference distance, 20*log10(lambda / (4*pi*d0))."""
    wavelength = SPEED_OF_LIGHT / (ble_center_frequency_mhz(int(channel)) * 1e6)
    return 20.0 * math.log10(wavelength / (4.0 * math.pi * params.reference_distance_m))


def received_power_dbm(
    params: RadioParams, channel: int, distance: float, shadowing_db: float = 0.0
) -> float:
    """Received power for a link of ``distance`` metres.

    ``shadowing_db`` is a realisation of the log-normal shadowing term; it is
    subtracted, so positive values attenuate.
    """
    d0 = params.reference_distance_m
    if distance < d0:
        raise ValueError(f"distance {distance} m is below the reference distance {d0} m")
    return (
        params.tx_power_dbm
        + reference_gain_db(params, channel)
        - 10.0 * params.path_loss_exponent * math.log10(distance / d0)
        - shadowing_db
    )


def sinr(p_rx: float, noise: float, wlan_interference: float = 0.0, mesh_interference: float = 0.0) -> float:
    """Linear SINR; all arguments in mW."""
    if min(p_rx, noise, wlan_interference, mesh_interference) < 0:
        raise ValueError("powers must be non-negative (linear mW)")
    denominator = noise + wlan_interference + mesh_interference
    if denominator <= 0:
        raise ValueError("noise + interference must be > 0")
    return p_rx / denominator


def bit_error_rate(sinr_linear: float, alpha: float) -> float:
    return 0.5 * math.erfc(math.sqrt(alpha * sinr_linear))


def packet_error_rate(mode: PerMode, sinr_linear: float = 0.0, params: RadioParams | None = None) -> float:
    if mode.kind is PerKind.FIXED:
        return mode.per
    if sinr_linear < 0:
        raise ValueError("SINR must be >= 0")
    params = params or RadioParams()
    ber = bit_error_rate(sinr_linear, params.per_alpha)
    n = params.pdu_bits
    if mode.kind is PerKind.SINR_PUBLISHED:
        return ber**n
    # 1 - (1 - ber)^n without cancellation for tiny ber
    return -math.expm1(n * math.log1p(-ber))
