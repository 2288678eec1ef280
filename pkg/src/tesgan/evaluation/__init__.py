from .features import EncoderFeatures, FeatureExtractor, InterpreterFeatures
from .metrics import corpus_bleu, dsr, fbd, fbd_from_features, frechet_distance, lm_score, msj, self_bleu, sentence_bleu
from .report import TABLE_HEADER, EvalReport, evaluate, read_report, select_best_epoch, write_report

__all__ = [
    "EncoderFeatures", "FeatureExtractor", "InterpreterFeatures",
    "corpus_bleu", "dsr", "fbd", "fbd_from_features", "frechet_distance", "lm_score", "msj",
    "self_bleu", "sentence_bleu",
    "TABLE_HEADER", "EvalReport", "evaluate", "read_report", "select_best_epoch", "write_report",
]
