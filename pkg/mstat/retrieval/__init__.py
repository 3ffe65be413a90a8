from mstat.retrieval._ranking import (
    RankingResult, EvalReport, protocols, report_ranks,
    cosine_similarity_matrix, rank_gallery, cmc_curve, average_precision, map_score, evaluate
)
