# Utility tests package