# Model tests package