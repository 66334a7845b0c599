# demirage terminal surface
