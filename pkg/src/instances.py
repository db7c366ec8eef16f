"""Load ProblemInstance documents from JSON.

Document fields:
  labels           array of m strings
  prior            array of m numbers
  data_letters     array of n strings
  generation       m rows of n numbers, row i is P(. | y_i)
  compressed_size  integer l
  cost             optional m x m array; entries may be numbers or parameter names
  parameters       optional object of default values for parameter names used in `cost`
"""

import json
from pathlib import Path

from src.probability import (
    CostMatrix,
    GenerationChannel,
    LabelPrior,
    ProblemInstance,
    ValidationError,
)

REQUIRED_FIELDS = ("labels", "prior", "data_letters", "generation", "compressed_size")


def parse_cost_params(pairs: list[str] | None) -> dict[str, float]:
    """Parse ``name=value`` strings from the command line."""
    params = {}
    for pair in pairs or []:
        name, sep, value = pair.partition("=")
        name = name.strip()
        if not sep or not name:
            raise ValidationError(f"cost parameter must look like name=value, got {pair!r}")
        try:
            params[name] = float(value)
        except ValueError:
            raise ValidationError(f"cost parameter {name!r} has non-numeric value {value!r}") from None
    return params


def _resolve_cost(rows, params: dict[str, float]) -> list[list[float]]:
    if not isinstance(rows, list) or not all(isinstance(r, list) for r in rows):
        raise ValidationError("cost must be an array of rows")
    resolved = []
    for i, row in enumerate(rows):
        out = []
        for entry in row:
            if isinstance(entry, str):
                if entry not in params:
                    raise ValidationError(f"cost row {i} uses unbound parameter {entry!r}")
                out.append(params[entry])
            elif isinstance(entry, (int, float)) and not isinstance(entry, bool):
                out.append(float(entry))
            else:
                raise ValidationError(f"cost row {i} has invalid entry {entry!r}")
        resolved.append(out)
    return resolved


def _numeric_rows(rows, name: str) -> list[list[float]]:
    if not isinstance(rows, list) or not rows or not all(isinstance(r, list) for r in rows):
        raise ValidationError(f"{name} must be a non-empty array of rows")
    for i, row in enumerate(rows):
        for entry in row:
            if isinstance(entry, bool) or not isinstance(entry, (int, float)):
                raise ValidationError(f"{name} row {i} has non-numeric entry {entry!r}")
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise ValidationError(f"{name} rows have differing lengths {sorted(widths)}")
    return rows


def instance_from_dict(doc: dict, cost_params: dict[str, float] | None = None) -> ProblemInstance:
    """Build a validated ProblemInstance; ``cost_params`` override the document's parameters."""
    if not isinstance(doc, dict):
        raise ValidationError("instance document must be a JSON object")
    missing = [f for f in REQUIRED_FIELDS if f not in doc]
    if missing:
        raise ValidationError(f"instance document is missing field(s): {', '.join(missing)}")

    labels = doc["labels"]
    letters = doc["data_letters"]
    if not all(isinstance(s, str) for s in labels) or not all(isinstance(s, str) for s in letters):
        raise ValidationError("labels and data_letters must be arrays of strings")

    generation = _numeric_rows(doc["generation"], "generation")
    if len(generation) != len(labels):
        raise ValidationError(f"generation has {len(generation)} rows but there are {len(labels)} labels")
    if len(generation[0]) != len(letters):
        raise ValidationError(
            f"generation rows have {len(generation[0])} entries but there are {len(letters)} data letters"
        )
    for i, row in enumerate(generation):
        if abs(sum(row) - 1.0) > 1e-12:
            raise ValidationError(f"generation row {i} ({labels[i]!r}) sums to {sum(row)!r}, expected 1")

    size = doc["compressed_size"]
    if isinstance(size, bool) or not isinstance(size, int):
        raise ValidationError(f"compressed_size must be an integer, got {size!r}")

    params = dict(doc.get("parameters") or {})
    params.update(cost_params or {})
    cost = None
    if doc.get("cost") is not None:
        cost = CostMatrix(_resolve_cost(doc["cost"], params))

    return ProblemInstance(
        prior=LabelPrior(doc["prior"]),
        generation=GenerationChannel(generation),
        compressed_size=size,
        cost=cost,
        labels=tuple(labels),
        data_letters=tuple(letters),
    )


def load_instance(path: str | Path, cost_params: dict[str, float] | None = None) -> ProblemInstance:
    """Read and validate an instance file. I/O problems surface as OSError."""
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ValidationError(f"{path}: invalid JSON ({e})") from None
    return instance_from_dict(doc, cost_params)


def instance_to_dict(instance: ProblemInstance) -> dict:
    return {
        "labels": list(instance.labels),
        "prior": instance.prior.probs.tolist(),
        "data_letters": list(instance.data_letters),
        "generation": instance.generation.matrix.tolist(),
        "compressed_size": instance.compressed_size,
        "cost": instance.cost.matrix.tolist(),
    }
