# -*- coding: utf-8 -*-
"""
Labmate - 提示詞模板
"""
