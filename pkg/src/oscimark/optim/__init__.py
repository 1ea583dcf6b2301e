from .elastic_net import (ElasticNetConfig, ElasticNetResult, elastic_net_fit,
                          elastic_net_objective)
from .svr import SvrModel, loo_grid_scores, loo_predictions, svr_fit, svr_predict, svr_primal

__all__ = [
    "ElasticNetConfig", "ElasticNetResult", "elastic_net_fit", "elastic_net_objective",
    "SvrModel", "svr_fit", "svr_predict", "svr_primal", "loo_grid_scores", "loo_predictions",
]
