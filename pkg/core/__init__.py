# -*- coding: utf-8 -*-
"""
Labmate - 核心模組

場景型別、感知、規則標註、後端、決策狀態機、回合模擬與評估
"""
