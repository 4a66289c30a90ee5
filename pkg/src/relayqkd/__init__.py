"""Five-node single-photon-relay QKD toolkit.

Submodules:
    fock         exact Fock-space optics oracle
    interference visibility theory and estimators
    source       imperfect single-photon source model
    rates        closed-form yields, gains, errors, key rates
    simulate     per-round Monte Carlo of the phase-matching protocol
    optimize     intensity / loss-split optimization and distance scans
    phase        instrument phase drift model and estimator
    ingest       experiment-record ingestion and decoy estimation
    config       run configuration and bundled presets
    cli          command-line interface
    plots        figure rendering for the report path
"""

__version__ = "0.1.0"
