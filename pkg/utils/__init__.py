# -*- coding: utf-8 -*-
"""
Labmate - 工具模組
"""
