"""
Experiment orchestration for normground.
"""
