import numpy as np

from dataclasses import dataclass, field
from typing import Optional

from mstat.util.exceptions import ConfigError, DimensionError, DegenerateInputError, EmptyInputError

protocols = (
    "cross-camera",
    "self",
    "all"
)

report_ranks = (1, 5, 10, 20)

def cosine_similarity_matrix(queries, gallery):
    """
    :param queries: (q, D)
    :param gallery: (g, D)

    :type queries: numpy.ndarray
    :type gallery: numpy.ndarray

    :returns: cosines (q, g) in [-1, 1]
    :rtype: numpy.ndarray
    """
    queries = np.asarray(queries, dtype = np.float64)
    gallery = np.asarray(gallery, dtype = np.float64)

    if queries.ndim != 2 or gallery.ndim != 2 or queries.shape[1] != gallery.shape[1]:
        raise DimensionError(f"cannot compare features {queries.shape} with {gallery.shape}")

    q_norm = np.linalg.norm(queries, axis = 1, keepdims = True)
    g_norm = np.linalg.norm(gallery, axis = 1, keepdims = True)

    if (q_norm == 0).any() or (g_norm == 0).any():
        raise DegenerateInputError("cosine similarity of a zero feature")

    return np.clip((queries / q_norm) @ (gallery / g_norm).T, -1.0, 1.0)

@dataclass
class RankingResult:
    """
    ``order[i]`` is the gallery sorted by descending similarity to query i, ties by gallery index.
    ``matches[i, r]`` flags that the item at rank r shares the query's identity,
    ``valid[i, r]`` that the protocol keeps it
    """
    order: np.ndarray
    matches: np.ndarray
    valid: np.ndarray

    @property
    def num_queries(self):
        return self.order.shape[0]

    @property
    def gallery_size(self):
        return self.order.shape[1]

    def kept(self, query):
        """
        :returns: match flags of the kept gallery items of one query, in rank order
        :rtype: numpy.ndarray
        """
        return self.matches[query][self.valid[query]]

    def answerable(self):
        return [i for i in range(self.num_queries) if self.kept(i).any()]

def rank_gallery(similarity, query_ids, gallery_ids, query_cams = None, gallery_cams = None, protocol = "cross-camera"):
    """
    Sort the gallery for every query and flag matches

    :param similarity: (q, g)
    :param query_ids: identity per query
    :param gallery_ids: identity per gallery item
    :param query_cams: camera per query, needed by ``cross-camera``
    :param gallery_cams: camera per gallery item
    :param protocol: ``cross-camera`` drops gallery items with the query's identity and camera,
        ``self`` drops the query itself (gallery is the query set), ``all`` drops nothing

    :rtype: RankingResult
    """
    similarity = np.asarray(similarity, dtype = np.float64)

    if protocol not in protocols:
        raise ConfigError(f"protocol must be one of {', '.join(protocols)}, not {protocol}")

    if similarity.ndim != 2:
        raise DimensionError(f"similarity must be (q, g), got {similarity.shape}")

    if similarity.shape[1] == 0:
        raise EmptyInputError("ranking against an empty gallery")

    query_ids, gallery_ids = np.asarray(query_ids), np.asarray(gallery_ids)

    if query_ids.shape != (similarity.shape[0],) or gallery_ids.shape != (similarity.shape[1],):
        raise DimensionError("identity labels do not match the similarity matrix")

    order = np.argsort(-similarity, axis = 1, kind = "stable")
    matches = gallery_ids[order] == query_ids[:, None]
    valid = np.ones(order.shape, dtype = bool)

    if protocol == "cross-camera":
        if query_cams is None or gallery_cams is None:
            raise ConfigError("the cross-camera protocol needs camera labels")

        query_cams, gallery_cams = np.asarray(query_cams), np.asarray(gallery_cams)
        valid = ~(matches & (gallery_cams[order] == query_cams[:, None]))

    elif protocol == "self":
        if similarity.shape[0] != similarity.shape[1]:
            raise ConfigError("the self protocol needs the gallery to be the query set")

        valid = order != np.arange(similarity.shape[0])[:, None]

    return RankingResult(order, matches, valid)

def _first_hits(rankings):
    hits = []

    for query in rankings.answerable():
        hits.append(int(np.argmax(rankings.kept(query))) + 1)

    if not hits:
        raise DegenerateInputError("no query has a correct gallery match")

    return hits

def cmc_curve(rankings):
    """
    ``cmc[k - 1]`` is the fraction of answerable queries whose first correct match is within the top k.
    Queries without any kept match are left out

    :type rankings: RankingResult

    :returns: curve of length g, nondecreasing, ending at 1
    :rtype: numpy.ndarray
    """
    if rankings.gallery_size == 0:
        raise EmptyInputError("empty gallery")

    hits = np.asarray(_first_hits(rankings))
    ranks = np.arange(1, rankings.gallery_size + 1)

    return (hits[None, :] <= ranks[:, None]).mean(axis = 1)

def average_precision(flags):
    """
    Mean of precision@rank over the ranks of the relevant items
    """
    flags = np.asarray(flags, dtype = bool)
    positions = np.flatnonzero(flags) + 1

    if not positions.size:
        raise DegenerateInputError("average precision of a ranking without relevant items")

    return float((np.arange(1, positions.size + 1) / positions).mean())

def map_score(rankings):
    """
    :type rankings: RankingResult
    :rtype: float
    """
    if rankings.gallery_size == 0:
        raise EmptyInputError("empty gallery")

    queries = rankings.answerable()

    if not queries:
        raise DegenerateInputError("no query has a correct gallery match")

    return float(np.mean([average_precision(rankings.kept(query)) for query in queries]))

@dataclass
class EvalReport:
    protocol: str
    stages: str
    num_query: int
    num_gallery: int
    num_answerable: int
    rank: dict
    mAP: float
    cmc: Optional[list] = field(default = None, repr = False)

    def record(self, include_cmc = False):
        data = {
            "protocol"          : self.protocol,
            "stages"            : self.stages,
            "num_query"         : self.num_query,
            "num_gallery"       : self.num_gallery,
            "num_answerable"    : self.num_answerable,
            "mAP"               : self.mAP,
            **{f"rank{k}": value for k, value in self.rank.items()}
        }

        if include_cmc and self.cmc is not None:
            data["cmc"] = list(self.cmc)

        return data

    @classmethod
    def from_record(cls, data):
        rank = {int(key[4:]): value for key, value in data.items() if key.startswith("rank")}
        return cls(data["protocol"], data["stages"], data["num_query"], data["num_gallery"],
            data["num_answerable"], rank, data["mAP"], data.get("cmc"))

    def row(self):
        ranks = "  ".join(f"R{k} {value:.4f}" for k, value in self.rank.items())
        return f"{self.stages:<9} {ranks}  mAP {self.mAP:.4f}"

def evaluate(query_features, gallery_features, query_ids, gallery_ids, query_cams = None, gallery_cams = None,
        protocol = "cross-camera", stages = "I+II+III", ranks = report_ranks):
    """
    Rank by cosine similarity and summarize with CMC and mAP

    :param query_features: (q, D)
    :param gallery_features: (g, D)

    :rtype: EvalReport
    """
    similarity = cosine_similarity_matrix(query_features, gallery_features)
    rankings = rank_gallery(similarity, query_ids, gallery_ids, query_cams, gallery_cams, protocol)
    curve = cmc_curve(rankings)

    rank = {k: float(curve[min(k, len(curve)) - 1]) for k in ranks}

    return EvalReport(protocol, stages, rankings.num_queries, rankings.gallery_size,
        len(rankings.answerable()), rank, map_score(rankings), [float(value) for value in curve])
