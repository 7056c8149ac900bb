"""
Console folder containing the svi2 command line tool and output helper
============

svi2_tool.py is the svi2 command (generate, solve, certify, experiment, oracle-check)
helper.py provides common output functions for the command line tool
"""
