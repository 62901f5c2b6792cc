from .classifier import Recognizer, predict
from .evaluation import AblationTable, EvalReport, ablation_table, evaluate
from .models import build_cnn7, build_cnn9, build_model
from .training import Mixing, Regime, TrainPlan, plan_stages, train_two_stage

__all__ = [
    "AblationTable",
    "EvalReport",
    "Mixing",
    "Recognizer",
    "Regime",
    "TrainPlan",
    "ablation_table",
    "build_cnn7",
    "build_cnn9",
    "build_model",
    "evaluate",
    "plan_stages",
    "predict",
    "train_two_stage",
]
