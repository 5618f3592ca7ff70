import pkg_resources
try:
    __version__ = pkg_resources.get_distribution(__name__).version
except pkg_resources.DistributionNotFound:
    pass


from .special import RngStream, Simplex
from .model import WeibullCluster, GptcmPoint, ModelParams, point_for_subject, evaluate_curves
from .dataset import Dataset, read_csv, write_csv
from .simulate import SimConfig, simulate_dataset
from .likelihood import loglik, grad_loglik
from .estimate import FitOptions, FitReport, fit, multi_start_fit
from .study import StudyConfig, run_study, report_table
from .reliability import SystemSpec, system_survival, monte_carlo_survival, importance_ranking


__all__ = [
    "RngStream", "Simplex",
    "WeibullCluster", "GptcmPoint", "ModelParams", "point_for_subject", "evaluate_curves",
    "Dataset", "read_csv", "write_csv",
    "SimConfig", "simulate_dataset",
    "loglik", "grad_loglik",
    "FitOptions", "FitReport", "fit", "multi_start_fit",
    "StudyConfig", "run_study", "report_table",
    "SystemSpec", "system_survival", "monte_carlo_survival", "importance_ranking",
]
