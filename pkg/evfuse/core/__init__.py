"""
EvFuse Core Package

Contains the domain types and run orchestration:
- types: timestamps, events, frames, event streams, timeline items
- timeline: merged event/frame timeline, stream checks, per-pixel event index
- errors: exception hierarchy
- processor: ReconstructionProcessor orchestrator

Author: Dragos Gontariu
License: GPL-3.0
"""
