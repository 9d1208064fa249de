# Agent tests package