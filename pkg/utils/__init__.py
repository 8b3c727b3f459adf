"""
Support code for normground: configuration, persistence and logging setup.
"""
