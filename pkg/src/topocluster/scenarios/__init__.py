from .gcounter import GCounter
from .results import (RESULT_COLUMNS, SUMMARY_COLUMNS, OpRecord, ScenarioResult, summary_row,
                      write_results, write_summary)
from .ring import PrefList, Ring, build_ring, key_position, preference_list
from .workloads import (SCENARIOS, AdCounterParams, ChannelSeparationParams, EchoParams,
                        KVCluster, KVNode, KVParams, KVResult, RunContext, ScenarioError,
                        UnicastParams, build_kv_cluster, choose_key, describe, list_scenarios,
                        parse_ratio, run_ad_counter, run_channel_separation, run_echo,
                        run_kv_workload, run_scenario, run_unicast)

__all__ = [
    "AdCounterParams", "ChannelSeparationParams", "EchoParams", "GCounter", "KVCluster",
    "KVNode", "KVParams", "KVResult", "OpRecord", "PrefList", "RESULT_COLUMNS", "Ring",
    "RunContext", "SCENARIOS", "SUMMARY_COLUMNS", "ScenarioError", "ScenarioResult",
    "UnicastParams", "build_kv_cluster", "build_ring", "choose_key", "describe", "key_position",
    "list_scenarios", "parse_ratio", "preference_list", "run_ad_counter",
    "run_channel_separation", "run_echo", "run_kv_workload", "run_scenario", "run_unicast",
    "summary_row", "write_results", "write_summary",
]
