from app.rebalance.demand import (
    ClusterModel, DemandHistogram, VirtualRequest, build_clusters, fit_demand, generate_virtual_requests,
    load_demand, marginal_probabilities, save_demand, suppress_served_virtuals,
)
from app.rebalance.formulations import (
    RebalanceCaps, RebalanceOutcome, RebalanceTask, Target, dispatch, proactive_rebalance,
    rebalance_baseline, rebalance_one_to_one, request_targets, sample_for_rebalance,
)

__all__ = [
    'ClusterModel', 'DemandHistogram', 'VirtualRequest', 'build_clusters', 'fit_demand',
    'generate_virtual_requests', 'load_demand', 'marginal_probabilities', 'save_demand',
    'suppress_served_virtuals', 'RebalanceCaps', 'RebalanceOutcome', 'RebalanceTask', 'Target',
    'dispatch', 'proactive_rebalance', 'rebalance_baseline', 'rebalance_one_to_one',
    'request_targets', 'sample_for_rebalance',
]
