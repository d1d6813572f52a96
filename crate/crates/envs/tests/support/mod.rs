pub mod legality;
