"""Chained polar codes for the wiretap channel and the broadcast channel
with confidential messages, with exact small-block oracles."""

from .bcc import BccCluster, bcc_decode_rx1, bcc_decode_rx2, bcc_encode, bcc_rate_triple
from .channels import (
    BccSpec,
    ConstructionParams,
    Dmc,
    JointSource,
    WiretapSpec,
    bec,
    bsc,
    mutual_information,
)
from .evaluation import (
    LeakageReport,
    ReliabilityReport,
    emit_report,
    exact_bcc_leakage,
    exact_leakage,
    leakage_proxy,
    run_reliability,
)
from .partition import IndexPartition, build_wiretap_partition, classify, select_E
from .polar import RuleSet, bit_posterior, polar_transform
from .reliability import BitChannelStats, bec_bit_stats, exact_bit_stats, mc_bit_stats
from .wiretap import ChainCluster, SeedBlock, decode_cluster, encode_cluster, wiretap_rates

__version__ = "0.1.0"
