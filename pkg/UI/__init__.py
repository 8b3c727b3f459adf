"""
User-facing surfaces of normground: the command line and the results dashboard.
"""
