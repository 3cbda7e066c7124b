# -*- coding: utf-8 -*-
"""Pytest integration tests for CompSim.

"""
__author__ = "CompSim Developers"
__email__ = "compsim-dev@users.noreply.github.com"
