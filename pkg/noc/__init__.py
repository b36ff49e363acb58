"""
Hermes fault-tolerant NoC simulator.

Modules:
    topology  - mesh graph, link health, fault injection, graph oracles
    reconfig  - DRF/AF flag reconfiguration protocol and Up*/Down* tables
    routing   - XY/YX/O1TURN/Up*/Down* hop routing, VC classes, CDG checker
    simcore   - cycle-accurate wormhole VC router network
    traffic   - synthetic generators and dependency-tracked traces
    harness   - experiment orchestration, metrics, CSV emission
"""

__version__ = "0.1.0"
