# demirage tests package
