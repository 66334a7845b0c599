# demirage core package
