"""Monte-Carlo benchmark campaigns."""

from stf.bench.campaign import (
    CampaignReport,
    EstimatorSummary,
    emit_report,
    parse_report_json,
    run_campaign,
    run_streams,
    simulate_run,
)
from stf.bench.config import CampaignConfig, load_config, parse_config
from stf.bench.registry import estimator_names

__all__ = [
    "CampaignConfig",
    "CampaignReport",
    "EstimatorSummary",
    "emit_report",
    "estimator_names",
    "load_config",
    "parse_config",
    "parse_report_json",
    "run_campaign",
    "run_streams",
    "simulate_run",
]
