from jsonschema import validate, ValidationError
import yaml

from covthresh.exceptions import InputError

ENVELOPE_YAML = """
type: object
required: [command, inputs, outputs, metrics]
properties:
  command:
    type: string
    enum: [partition, profile, solve, path, synth, bench]
  inputs:
    type: object
    description: Echo of the command line flags.
  outputs:
    type: array
    description: Every file the command wrote.
    items:
      type: string
  metrics:
    type: object
"""

# one entry per lambda in solve and path reports
LAMBDA_RUN_YAML = """
type: object
required: [lambda, num_components, max_component, objective, kkt_passed, time_partition_ms, time_solve_ms]
properties:
  lambda:
    type: number
    minimum: 0
  num_components:
    type: integer
    minimum: 1
  max_component:
    type: integer
    minimum: 1
  objective:
    type: [number, "null"]
    description: null when Theta came out indefinite.
  kkt_passed:
    type: boolean
  converged:
    type: boolean
  time_partition_ms:
    type: number
    minimum: 0
  time_solve_ms:
    type: number
    minimum: 0
"""

# a lambda whose solve aborted before producing an estimate
FAILED_RUN_YAML = """
type: object
required: [lambda, converged, error]
properties:
  lambda:
    type: number
    minimum: 0
  converged:
    const: false
  kkt_passed:
    const: false
  error:
    type: string
"""

METRICS_YAML = """
partition:
  type: object
  required: [lambda, num_components, components, sizes]
  properties:
    lambda:
      type: number
    num_components:
      type: integer
      minimum: 1
    components:
      type: array
      description: 1-based node indices, one list per component.
      items:
        type: array
        items:
          type: integer
          minimum: 1
    sizes:
      type: array
      items:
        type: integer
profile:
  type: object
  required: [lambdas, sizes, lambda_p_max]
  properties:
    lambdas:
      type: array
      items:
        type: number
    sizes:
      type: array
      description: Component sizes, largest first, at each lambda.
      items:
        type: array
        items:
          type: integer
    lambda_p_max:
      type: [number, "null"]
    p_max:
      type: [integer, "null"]
solve:
  type: object
  required: [runs, screened]
  properties:
    screened:
      type: boolean
    runs:
      type: array
      minItems: 1
path:
  type: object
  required: [runs, partitions_nested]
  properties:
    partitions_nested:
      type: boolean
    runs:
      type: array
      minItems: 1
synth:
  type: object
  required: [K, p1, seed, seed_used, sigma, lambda_min, lambda_max, lambda_I, lambda_II]
  properties:
    K:
      type: integer
    p1:
      type: integer
    seed:
      type: integer
    seed_used:
      type: integer
    sigma:
      type: number
    lambda_min:
      type: number
    lambda_max:
      type: number
    lambda_I:
      type: number
    lambda_II:
      type: number
bench:
  type: object
  required: [lambda, time_screened_s, time_full_s, time_partition_s, speedup_factor, objective_gap, converged]
  properties:
    lambda:
      type: number
    time_screened_s:
      type: number
    time_full_s:
      type: number
    time_partition_s:
      type: number
    speedup_factor:
      type: [number, "null"]
    objective_gap:
      type: [number, "null"]
    converged:
      type: boolean
"""

ENVELOPE = yaml.safe_load(ENVELOPE_YAML)
LAMBDA_RUN = yaml.safe_load(LAMBDA_RUN_YAML)
FAILED_RUN = yaml.safe_load(FAILED_RUN_YAML)
METRICS = yaml.safe_load(METRICS_YAML)
METRICS['solve']['properties']['runs']['items'] = {'anyOf': [LAMBDA_RUN, FAILED_RUN]}
METRICS['path']['properties']['runs']['items'] = {'anyOf': [LAMBDA_RUN, FAILED_RUN]}


def validate_report(report: dict) -> bool:
    """
    Validate a report dictionary against the envelope and its command's metrics schema.
    """
    try:
        validate(report, ENVELOPE)
        validate(report['metrics'], METRICS[report['command']])
        return True
    except ValidationError as e:
        raise InputError(f"Report validation error: {e.message}")
